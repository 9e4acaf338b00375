#include "vssl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "vssl/serialize.hpp"

namespace vssl {

namespace {

constexpr uint32_t kVideoMagic = 0x44565356; // "VSVD" little-endian
constexpr uint32_t kVideoVersion = 1;
constexpr double kShapeHalfSize = 3.5;

enum ShapeKind { kSquare = 0, kCircle, kTriangle, kCross };
enum MotionKind { kLeftRight = 0, kUpDown, kDiagonal, kCircular };

// Signed distance to the shape boundary; negative inside. Rendering maps
// distance to intensity through a 1px soft edge.
double shape_distance(int kind, double px, double py, double cx, double cy) {
    const double dx = px - cx;
    const double dy = py - cy;
    const double hs = kShapeHalfSize;
    switch (kind) {
        case kSquare:
            return std::max(std::abs(dx), std::abs(dy)) - hs;
        case kCircle:
            return std::sqrt(dx * dx + dy * dy) - hs;
        case kTriangle: {
            // isoceles triangle with apex up: vertices (0,-hs), (+-hs, +hs)
            const double bottom = dy - hs;
            // edge from (0,-hs) to (hs,hs): normal (2hs, -hs)/|.|
            const double nx = 2.0 * hs, ny = -hs;
            const double nlen = std::sqrt(nx * nx + ny * ny);
            const double right = (nx * (dx - 0.0) + ny * (dy + hs)) / nlen;
            const double left = (-nx * (dx - 0.0) + ny * (dy + hs)) / nlen;
            return std::max({bottom, right, left});
        }
        case kCross: {
            const double bar = 0.4 * hs;
            const double horiz = std::max(std::abs(dx) - hs, std::abs(dy) - bar);
            const double vert = std::max(std::abs(dx) - bar, std::abs(dy) - hs);
            return std::min(horiz, vert);
        }
        default:
            throw ContractError("unknown shape kind");
    }
}

struct Position {
    double x, y;
};

Position shape_position(int motion, double cx, double cy, double amplitude, double u) {
    switch (motion) {
        case kLeftRight:
            return {cx + amplitude * std::sin(u), cy};
        case kUpDown:
            return {cx, cy + amplitude * std::sin(u)};
        case kDiagonal: {
            const double d = amplitude * std::sin(u) * M_SQRT1_2;
            return {cx + d, cy + d};
        }
        case kCircular:
            return {cx + amplitude * std::cos(u), cy + amplitude * std::sin(u)};
        default:
            throw ContractError("unknown motion kind");
    }
}

void validate_data_config(const DataConfig& cfg) {
    if (cfg.n_videos <= 0 || cfg.n_classes <= 0)
        throw ConfigError("data: n_videos and n_classes must be positive");
    if (cfg.n_videos % cfg.n_classes != 0)
        throw ConfigError("data: n_videos (" + std::to_string(cfg.n_videos) +
                          ") must be divisible by n_classes (" + std::to_string(cfg.n_classes) + ")");
    if (cfg.channels != 1) throw ConfigError("data: only single-channel video is supported");
    if (cfg.clip_len > cfg.total_frames)
        throw ConfigError("data: clip_len exceeds total_frames");
    if (cfg.crop > cfg.canvas) throw ConfigError("data: crop exceeds canvas size");
    class_grid(cfg.n_classes);
}

// Bilinear sample within a crop window; coordinates are clamped to the
// window so resampling never reads outside the crop.
float bilinear_crop_sample(const float* frame, int canvas, int crop_x, int crop_y, int crop_size,
                           double sx, double sy) {
    const double lo_x = crop_x, hi_x = crop_x + crop_size - 1;
    const double lo_y = crop_y, hi_y = crop_y + crop_size - 1;
    sx = std::min(std::max(sx, lo_x), hi_x);
    sy = std::min(std::max(sy, lo_y), hi_y);
    const int x0 = static_cast<int>(std::floor(sx));
    const int y0 = static_cast<int>(std::floor(sy));
    const int x1 = std::min(x0 + 1, static_cast<int>(hi_x));
    const int y1 = std::min(y0 + 1, static_cast<int>(hi_y));
    const double fx = sx - x0;
    const double fy = sy - y0;
    const double v00 = frame[y0 * canvas + x0];
    const double v01 = frame[y0 * canvas + x1];
    const double v10 = frame[y1 * canvas + x0];
    const double v11 = frame[y1 * canvas + x1];
    const double top = v00 + (v01 - v00) * fx;
    const double bot = v10 + (v11 - v10) * fx;
    return static_cast<float>(top + (bot - top) * fy);
}

} // namespace

ClassGrid class_grid(int n_classes) {
    if (n_classes < 1) throw ConfigError("n_classes must be at least 1");
    for (int shapes = std::min(4, n_classes); shapes >= 1; --shapes) {
        if (n_classes % shapes == 0 && n_classes / shapes <= 4)
            return {shapes, n_classes / shapes};
    }
    throw ConfigError("n_classes=" + std::to_string(n_classes) +
                      " cannot be arranged on the 4-shapes x 4-motions grid");
}

SyntheticVideo generate_video(const DataConfig& cfg, int index) {
    validate_data_config(cfg);
    if (index < 0 || index >= cfg.n_videos)
        throw ContractError("generate_video: index out of range");
    const ClassGrid grid = class_grid(cfg.n_classes);

    SyntheticVideo video;
    video.video_id = index;
    video.class_id = index % cfg.n_classes;
    video.shape_index = video.class_id / grid.motions;
    video.motion_index = video.class_id % grid.motions;

    Rng rng(mix64(cfg.seed, 0xDA7A5E7, static_cast<uint64_t>(index)));
    const double margin = kShapeHalfSize + 1.0;
    const double center = (cfg.canvas - 1) / 2.0;
    const double amplitude = center - margin;
    video.speed = rng.uniform(0.75, 1.5); // oscillation cycles over the video
    video.phase = rng.uniform(0.0, 2.0 * M_PI);
    video.intensity = rng.uniform(0.7, 1.0);
    // random center offset on the axis the motion does not sweep
    const double off_x = rng.uniform(-2.0, 2.0);
    const double off_y = rng.uniform(-2.0, 2.0);
    double cx = center, cy = center;
    switch (video.motion_index % 4) {
        case kLeftRight: cy = std::min(std::max(center + off_y, margin), cfg.canvas - 1 - margin); break;
        case kUpDown: cx = std::min(std::max(center + off_x, margin), cfg.canvas - 1 - margin); break;
        default: break; // diagonal and circular sweep both axes; keep centered
    }

    video.frames.resize(static_cast<size_t>(cfg.channels) * cfg.total_frames * cfg.canvas * cfg.canvas);
    for (int t = 0; t < cfg.total_frames; ++t) {
        const double u = video.phase + 2.0 * M_PI * video.speed * t / cfg.total_frames;
        const Position pos = shape_position(video.motion_index % 4, cx, cy, amplitude, u);
        float* frame = video.frames.data() + static_cast<size_t>(t) * cfg.canvas * cfg.canvas;
        for (int y = 0; y < cfg.canvas; ++y)
            for (int x = 0; x < cfg.canvas; ++x) {
                const double d = shape_distance(video.shape_index % 4, x, y, pos.x, pos.y);
                const double coverage = std::min(std::max(0.5 - d, 0.0), 1.0);
                frame[y * cfg.canvas + x] = static_cast<float>(video.intensity * coverage);
            }
    }
    return video;
}

std::vector<SyntheticVideo> generate_dataset(const DataConfig& cfg) {
    validate_data_config(cfg);
    std::vector<SyntheticVideo> out;
    out.reserve(static_cast<size_t>(cfg.n_videos));
    for (int i = 0; i < cfg.n_videos; ++i) out.push_back(generate_video(cfg, i));
    return out;
}

AugmentParams sample_augment_params(const DataConfig& cfg, Rng& rng) {
    AugmentParams p;
    const double area_scale = rng.uniform(0.5, 1.0);
    p.crop_size = static_cast<int>(std::lround(cfg.canvas * std::sqrt(area_scale)));
    p.crop_size = std::min(std::max(p.crop_size, 1), cfg.canvas);
    p.crop_x = rng.uniform_int(0, cfg.canvas - p.crop_size);
    p.crop_y = rng.uniform_int(0, cfg.canvas - p.crop_size);
    p.flip = rng.uniform() < 0.2;
    p.jitter = rng.uniform() < 0.8;
    if (p.jitter) {
        p.brightness = rng.uniform(0.6, 1.4);
        p.contrast = rng.uniform(0.6, 1.4);
    }
    p.blur = rng.uniform() < 0.5;
    if (p.blur) p.sigma = rng.uniform(0.1, 1.0);
    return p;
}

Tensor augment(const SyntheticVideo& video, int t_start, const AugmentParams& params,
               const DataConfig& cfg) {
    if (t_start < 0 || t_start + cfg.clip_len > cfg.total_frames)
        throw ContractError("augment: temporal window out of range");
    const int crop = cfg.crop;
    const int canvas = cfg.canvas;
    std::vector<float> clip(static_cast<size_t>(cfg.clip_len) * crop * crop);

    // crop + bilinear resize, then flip; identical spatial map for all frames
    const double scale = static_cast<double>(params.crop_size) / crop;
    for (int t = 0; t < cfg.clip_len; ++t) {
        const float* frame =
            video.frames.data() + static_cast<size_t>(t_start + t) * canvas * canvas;
        float* out = clip.data() + static_cast<size_t>(t) * crop * crop;
        for (int y = 0; y < crop; ++y)
            for (int x = 0; x < crop; ++x) {
                const double sy = params.crop_y + (y + 0.5) * scale - 0.5;
                const double sx = params.crop_x + (x + 0.5) * scale - 0.5;
                const int ox = params.flip ? crop - 1 - x : x;
                out[y * crop + ox] = bilinear_crop_sample(frame, canvas, params.crop_x, params.crop_y,
                                                          params.crop_size, sx, sy);
            }
    }

    if (params.jitter) {
        for (auto& v : clip) v = static_cast<float>(v * params.brightness);
        double mean = 0.0;
        for (float v : clip) mean += v;
        mean /= static_cast<double>(clip.size());
        for (auto& v : clip) v = static_cast<float>(mean + (v - mean) * params.contrast);
    }

    // grayscale conversion slot: single-channel input, nothing to do

    if (params.blur) {
        const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * params.sigma)));
        std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
        for (int i = -radius; i <= radius; ++i)
            kernel[static_cast<size_t>(i + radius)] =
                std::exp(-(static_cast<double>(i) * i) / (2.0 * params.sigma * params.sigma));
        std::vector<float> tmp(static_cast<size_t>(crop) * crop);
        for (int t = 0; t < cfg.clip_len; ++t) {
            float* img = clip.data() + static_cast<size_t>(t) * crop * crop;
            // horizontal pass; kernel renormalized over in-bounds taps so
            // constants stay constant at the borders
            for (int y = 0; y < crop; ++y)
                for (int x = 0; x < crop; ++x) {
                    double acc = 0.0, wsum = 0.0;
                    for (int i = -radius; i <= radius; ++i) {
                        const int xx = x + i;
                        if (xx < 0 || xx >= crop) continue;
                        const double w = kernel[static_cast<size_t>(i + radius)];
                        acc += w * img[y * crop + xx];
                        wsum += w;
                    }
                    tmp[y * crop + x] = static_cast<float>(acc / wsum);
                }
            for (int y = 0; y < crop; ++y)
                for (int x = 0; x < crop; ++x) {
                    double acc = 0.0, wsum = 0.0;
                    for (int i = -radius; i <= radius; ++i) {
                        const int yy = y + i;
                        if (yy < 0 || yy >= crop) continue;
                        const double w = kernel[static_cast<size_t>(i + radius)];
                        acc += w * tmp[yy * crop + x];
                        wsum += w;
                    }
                    img[y * crop + x] = static_cast<float>(acc / wsum);
                }
        }
    }

    for (auto& v : clip) v = std::min(std::max(v, 0.0f), 1.0f);
    return Tensor::from_data({cfg.channels, cfg.clip_len, crop, crop}, std::move(clip));
}

Tensor augment(const SyntheticVideo& video, int t_start, Rng& rng, const DataConfig& cfg) {
    return augment(video, t_start, sample_augment_params(cfg, rng), cfg);
}

ClipPair sample_clip_pair(const SyntheticVideo& video, Rng& rng, const DataConfig& cfg) {
    const int max_start = cfg.total_frames - cfg.clip_len;
    ClipPair pair;
    pair.t1 = rng.uniform_int(0, max_start);
    pair.t2 = rng.uniform_int(0, max_start);
    pair.x1 = augment(video, pair.t1, rng, cfg);
    pair.x2 = augment(video, pair.t2, rng, cfg);
    return pair;
}

uint64_t corpus_hash(const std::vector<SyntheticVideo>& videos) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& v : videos) {
        h = fnv1a(&v.video_id, sizeof(v.video_id), h);
        h = fnv1a(&v.class_id, sizeof(v.class_id), h);
        h = fnv1a(v.frames.data(), v.frames.size() * sizeof(float), h);
    }
    return h;
}

void save_corpus(const std::string& dir, const std::vector<SyntheticVideo>& videos,
                 const DataConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream manifest(fs::path(dir) / "manifest.csv");
    if (!manifest) throw DataError("save_corpus: cannot write manifest in " + dir);
    manifest << "video_id,class_id,file\n";
    for (const auto& v : videos) {
        char name[32];
        std::snprintf(name, sizeof(name), "video_%05lld.bin", static_cast<long long>(v.video_id));
        std::ofstream os(fs::path(dir) / name, std::ios::binary);
        if (!os) throw DataError(std::string("save_corpus: cannot write ") + name);
        write_u32(os, kVideoMagic);
        write_u32(os, kVideoVersion);
        write_u32(os, static_cast<uint32_t>(cfg.channels));
        write_u32(os, static_cast<uint32_t>(cfg.total_frames));
        write_u32(os, static_cast<uint32_t>(cfg.canvas));
        write_u32(os, static_cast<uint32_t>(cfg.canvas));
        write_i32(os, v.class_id);
        write_i64(os, v.video_id);
        for (float x : v.frames) write_f32(os, x);
        manifest << v.video_id << "," << v.class_id << "," << name << "\n";
    }
}

std::vector<SyntheticVideo> load_corpus(const std::string& dir, const DataConfig& cfg) {
    namespace fs = std::filesystem;
    std::ifstream manifest(fs::path(dir) / "manifest.csv");
    if (!manifest) throw DataError("load_corpus: missing manifest.csv in " + dir);
    std::string line;
    if (!std::getline(manifest, line) || line != "video_id,class_id,file")
        throw DataError("load_corpus: manifest.csv:1: bad header");
    std::vector<SyntheticVideo> out;
    int lineno = 1;
    while (std::getline(manifest, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw DataError("load_corpus: manifest.csv:" + std::to_string(lineno) + ": bad row");
        const std::string file = line.substr(c2 + 1);
        std::ifstream is(fs::path(dir) / file, std::ios::binary);
        if (!is) throw DataError("load_corpus: cannot open " + file);
        if (read_u32(is) != kVideoMagic) throw DataError("load_corpus: " + file + ": bad magic");
        if (read_u32(is) != kVideoVersion) throw DataError("load_corpus: " + file + ": bad version");
        const auto c = read_u32(is), t = read_u32(is), h = read_u32(is), w = read_u32(is);
        if (static_cast<int>(c) != cfg.channels || static_cast<int>(t) != cfg.total_frames ||
            static_cast<int>(h) != cfg.canvas || static_cast<int>(w) != cfg.canvas)
            throw DataError("load_corpus: " + file + ": shape does not match the config");
        SyntheticVideo v;
        v.class_id = read_i32(is);
        v.video_id = read_i64(is);
        v.frames.resize(static_cast<size_t>(c) * t * h * w);
        for (auto& x : v.frames) x = read_f32(is);
        out.push_back(std::move(v));
    }
    return out;
}

} // namespace vssl
