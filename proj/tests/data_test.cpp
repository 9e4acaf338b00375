#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "vssl/data.hpp"

using namespace vssl;

namespace {

DataConfig small_config() {
    DataConfig cfg;
    cfg.n_videos = 32;
    cfg.n_classes = 16;
    cfg.seed = 42;
    return cfg;
}

} // namespace

TEST_CASE("video regeneration is bit-identical per (seed, index)") {
    const DataConfig cfg = small_config();
    for (int i : {0, 7, 31}) {
        const SyntheticVideo a = generate_video(cfg, i);
        const SyntheticVideo b = generate_video(cfg, i);
        CHECK(a.frames == b.frames);
        CHECK(a.class_id == b.class_id);
    }
    DataConfig other = cfg;
    other.seed = 43;
    CHECK(generate_video(cfg, 0).frames != generate_video(other, 0).frames);
}

TEST_CASE("balanced classes: 160 videos over 16 classes is 10 per class") {
    DataConfig cfg;
    cfg.n_videos = 160;
    cfg.n_classes = 16;
    const auto videos = generate_dataset(cfg);
    std::map<int, int> counts;
    for (const auto& v : videos) counts[v.class_id]++;
    REQUIRE(counts.size() == 16);
    for (const auto& [cls, n] : counts) CHECK(n == 10);
}

TEST_CASE("class grid decomposition") {
    CHECK(class_grid(16).shapes == 4);
    CHECK(class_grid(16).motions == 4);
    CHECK(class_grid(8).shapes == 4);
    CHECK(class_grid(8).motions == 2);
    CHECK(class_grid(1).shapes == 1);
    CHECK_THROWS_AS(class_grid(5), ConfigError);
    CHECK_THROWS_AS(class_grid(32), ConfigError);

    DataConfig cfg = small_config();
    cfg.n_videos = 33; // not divisible by 16
    CHECK_THROWS_AS(generate_dataset(cfg), ConfigError);
}

TEST_CASE("class id encodes the (shape, motion) grid") {
    const DataConfig cfg = small_config();
    const auto videos = generate_dataset(cfg);
    const ClassGrid grid = class_grid(cfg.n_classes);
    for (const auto& v : videos) {
        CHECK(v.class_id == v.shape_index * grid.motions + v.motion_index);
        CHECK(v.video_id % cfg.n_classes == v.class_id);
    }
}

TEST_CASE("pixel values stay in [0,1] and mean intensity sits in the reference band") {
    DataConfig cfg;
    cfg.n_videos = 64;
    cfg.n_classes = 16;
    cfg.seed = 42;
    const auto videos = generate_dataset(cfg);
    double mean = 0.0;
    int64_t count = 0;
    for (const auto& v : videos) {
        for (float p : v.frames) {
            CHECK(p >= 0.0f);
            CHECK(p <= 1.0f);
            mean += p;
        }
        count += static_cast<int64_t>(v.frames.size());
    }
    mean /= static_cast<double>(count);
    CHECK(mean > 0.0);
    CHECK(mean < 0.5);
    // reference value measured once on seed 42 (see VSSL_MEASURED_MEAN below)
    const double reference = 0.0615850305;
    CHECK(mean == doctest::Approx(reference).epsilon(0.2));
}

TEST_CASE("clip pair: contract shape and boundary window") {
    const DataConfig cfg = small_config();
    const SyntheticVideo video = generate_video(cfg, 3);
    Rng rng(5);
    const ClipPair pair = sample_clip_pair(video, rng, cfg);
    CHECK(pair.x1.shape() == std::vector<int>{1, 4, 16, 16});
    CHECK(pair.x2.shape() == std::vector<int>{1, 4, 16, 16});

    DataConfig full = cfg;
    full.clip_len = full.total_frames; // only one valid window
    Rng rng2(6);
    const ClipPair boundary = sample_clip_pair(generate_video(full, 1), rng2, full);
    CHECK(boundary.t1 == 0);
    CHECK(boundary.t2 == 0);
    CHECK(boundary.x1.shape()[1] == full.total_frames);
}

TEST_CASE("temporal start offsets are uniform (chi-square, p > 0.01)") {
    const DataConfig cfg = small_config();
    const SyntheticVideo video = generate_video(cfg, 0);
    Rng rng(2024);
    const int n_bins = cfg.total_frames - cfg.clip_len + 1; // 13
    std::vector<int> counts(static_cast<size_t>(n_bins), 0);
    const int n_pairs = 10000;
    for (int i = 0; i < n_pairs; ++i) {
        const ClipPair pair = sample_clip_pair(video, rng, cfg);
        counts[static_cast<size_t>(pair.t1)]++;
        counts[static_cast<size_t>(pair.t2)]++;
    }
    const double expected = 2.0 * n_pairs / n_bins;
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // dof = 12, critical value at p = 0.01 is 26.217
    CHECK(chi2 < 26.217);
}

TEST_CASE("augment all-skip path: full center crop at matching sizes is the identity") {
    DataConfig cfg = small_config();
    cfg.canvas = 16; // canvas == crop: the resample grid hits integer pixels
    const SyntheticVideo video = generate_video(cfg, 2);
    AugmentParams p;
    p.crop_size = 16;
    p.crop_x = 0;
    p.crop_y = 0;
    const Tensor out = augment(video, 4, p, cfg);
    const size_t frame_px = static_cast<size_t>(cfg.canvas) * cfg.canvas;
    for (int t = 0; t < cfg.clip_len; ++t)
        for (size_t i = 0; i < frame_px; ++i)
            CHECK(out.values()[static_cast<size_t>(t) * frame_px + i] ==
                  video.frames[(4 + static_cast<size_t>(t)) * frame_px + i]);
}

TEST_CASE("augment all-skip path on the full canvas is crop-resample only") {
    const DataConfig cfg = small_config();
    const SyntheticVideo video = generate_video(cfg, 2);
    AugmentParams p;
    p.crop_size = cfg.canvas;
    p.crop_x = 0;
    p.crop_y = 0;
    const Tensor a = augment(video, 0, p, cfg);
    const Tensor b = augment(video, 0, p, cfg);
    CHECK(a.values() == b.values()); // deterministic resample
    // values are convex combinations of inputs
    float lo = 1e9f, hi = -1e9f;
    for (float v : video.frames) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (float v : a.values()) {
        CHECK(v >= lo - 1e-6f);
        CHECK(v <= hi + 1e-6f);
    }
}

TEST_CASE("augment output is always clamped to [0,1]") {
    const DataConfig cfg = small_config();
    const SyntheticVideo video = generate_video(cfg, 9);
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor clip = augment(video, rng.uniform_int(0, 12), rng, cfg);
        for (float v : clip.values()) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }
}

TEST_CASE("horizontal flip is an exact involution for a fixed crop") {
    const DataConfig cfg = small_config();
    const SyntheticVideo video = generate_video(cfg, 4);
    AugmentParams p;
    p.crop_size = 20;
    p.crop_x = 2;
    p.crop_y = 1;
    p.flip = false;
    const Tensor plain = augment(video, 3, p, cfg);
    p.flip = true;
    const Tensor flipped = augment(video, 3, p, cfg);
    // un-flip manually: must reproduce the crop-only result exactly
    const int crop = cfg.crop;
    for (int t = 0; t < cfg.clip_len; ++t)
        for (int y = 0; y < crop; ++y)
            for (int x = 0; x < crop; ++x) {
                const size_t base = static_cast<size_t>(t) * crop * crop;
                const float unflipped =
                    flipped.values()[base + static_cast<size_t>(y) * crop + (crop - 1 - x)];
                const float expect = plain.values()[base + static_cast<size_t>(y) * crop + x];
                CHECK(std::abs(unflipped - expect) <= 1e-6f);
            }
}

TEST_CASE("augmentation parameters apply identically to every frame") {
    // constant-valued frames stay constant through the whole pipeline when
    // the same spatial parameters are reused across frames
    DataConfig cfg = small_config();
    SyntheticVideo video = generate_video(cfg, 5);
    const size_t frame_px = static_cast<size_t>(cfg.canvas) * cfg.canvas;
    for (int t = 0; t < cfg.total_frames; ++t)
        for (size_t i = 0; i < frame_px; ++i)
            video.frames[static_cast<size_t>(t) * frame_px + i] = 0.02f * t;
    Rng rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        const AugmentParams p = sample_augment_params(cfg, rng);
        const Tensor clip = augment(video, 2, p, cfg);
        const size_t out_px = static_cast<size_t>(cfg.crop) * cfg.crop;
        for (int t = 0; t < cfg.clip_len; ++t) {
            const float first = clip.values()[static_cast<size_t>(t) * out_px];
            for (size_t i = 1; i < out_px; ++i)
                CHECK(clip.values()[static_cast<size_t>(t) * out_px + i] ==
                      doctest::Approx(first).epsilon(1e-6));
        }
    }
}

TEST_CASE("corpus dump round-trips through the binary format") {
    namespace fs = std::filesystem;
    DataConfig cfg = small_config();
    const auto videos = generate_dataset(cfg);
    const std::string dir = (fs::temp_directory_path() / "vssl_corpus_test").string();
    fs::remove_all(dir);
    save_corpus(dir, videos, cfg);

    // manifest lists every id and class
    std::ifstream manifest(fs::path(dir) / "manifest.csv");
    REQUIRE(manifest.good());
    std::string header;
    std::getline(manifest, header);
    CHECK(header == "video_id,class_id,file");
    int rows = 0;
    for (std::string line; std::getline(manifest, line);)
        if (!line.empty()) ++rows;
    CHECK(rows == cfg.n_videos);

    const auto loaded = load_corpus(dir, cfg);
    REQUIRE(loaded.size() == videos.size());
    for (size_t i = 0; i < videos.size(); ++i) {
        CHECK(loaded[i].video_id == videos[i].video_id);
        CHECK(loaded[i].class_id == videos[i].class_id);
        CHECK(loaded[i].frames == videos[i].frames);
    }
    fs::remove_all(dir);
}

TEST_CASE("load_corpus rejects mismatched shapes") {
    namespace fs = std::filesystem;
    DataConfig cfg = small_config();
    const auto videos = generate_dataset(cfg);
    const std::string dir = (fs::temp_directory_path() / "vssl_corpus_test2").string();
    fs::remove_all(dir);
    save_corpus(dir, videos, cfg);
    DataConfig other = cfg;
    other.total_frames = 8;
    other.clip_len = 4;
    CHECK_THROWS_AS(load_corpus(dir, other), DataError);
    fs::remove_all(dir);
}

TEST_CASE("corpus hash is a pure function of (seed, config)") {
    const DataConfig cfg = small_config();
    const uint64_t h1 = corpus_hash(generate_dataset(cfg));
    const uint64_t h2 = corpus_hash(generate_dataset(cfg));
    CHECK(h1 == h2);
    DataConfig other = cfg;
    other.seed = 1;
    CHECK(corpus_hash(generate_dataset(other)) != h1);
}
