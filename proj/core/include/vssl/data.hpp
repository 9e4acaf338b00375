#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vssl/rng.hpp"
#include "vssl/tensor.hpp"

namespace vssl {

// Synthetic corpus parameters. Videos are single-channel 24x24 canvases of a
// moving shape; class identity = (shape type, motion pattern) pair. Labels
// exist for evaluation only and never reach the training path.
struct DataConfig {
    int n_videos = 320;
    int n_classes = 16;
    int channels = 1;
    int total_frames = 16;
    int canvas = 24; // square pre-crop canvas
    int clip_len = 4;
    int crop = 16; // augmented clip spatial size
    uint64_t seed = 42;
};

struct SyntheticVideo {
    std::vector<float> frames; // channels * total_frames * canvas * canvas, in [0,1]
    int class_id = -1;
    int64_t video_id = -1;
    // generator parameters, kept for inspection
    int shape_index = -1;
    int motion_index = -1;
    double speed = 0.0;
    double phase = 0.0;
    double intensity = 0.0;
};

// Two independently sampled, independently augmented subclips of one video.
struct ClipPair {
    Tensor x1;
    Tensor x2;
    int t1 = -1; // temporal start offsets (diagnostics)
    int t2 = -1;
};

// Factorizes n_classes into (shapes x motions) with both factors <= 4;
// throws ConfigError when impossible. class_id = shape * motions + motion.
struct ClassGrid {
    int shapes;
    int motions;
};
ClassGrid class_grid(int n_classes);

// Deterministic per (seed, index): regenerating any video yields identical
// bits. Classes are balanced round-robin; n_videos must divide by n_classes.
std::vector<SyntheticVideo> generate_dataset(const DataConfig& cfg);
SyntheticVideo generate_video(const DataConfig& cfg, int index);

// Spatial augmentation parameters, sampled once per clip and applied to every
// frame (temporal consistency).
struct AugmentParams {
    int crop_size = 0; // side length on the canvas
    int crop_x = 0;
    int crop_y = 0;
    bool flip = false;
    bool jitter = false;
    double brightness = 1.0;
    double contrast = 1.0;
    bool blur = false;
    double sigma = 0.0;
};

AugmentParams sample_augment_params(const DataConfig& cfg, Rng& rng);

// Pipeline, in order: random resized crop (area scale in [0.5,1]) to
// crop x crop, horizontal flip p=0.2, brightness/contrast jitter strength 0.4
// p=0.8, grayscale placeholder (single channel already), Gaussian blur
// sigma in [0.1,1] p=0.5, clamp to [0,1].
Tensor augment(const SyntheticVideo& video, int t_start, const AugmentParams& params,
               const DataConfig& cfg);
Tensor augment(const SyntheticVideo& video, int t_start, Rng& rng, const DataConfig& cfg);

// Two uniform-random temporal windows (independent; may overlap), each
// augmented independently.
ClipPair sample_clip_pair(const SyntheticVideo& video, Rng& rng, const DataConfig& cfg);

// Order-independent fingerprint of a generated corpus (regeneration check).
uint64_t corpus_hash(const std::vector<SyntheticVideo>& videos);

// Corpus dump: one binary file per video (magic, version, shape, class_id,
// video_id, then raw little-endian float32 frames) plus a manifest csv.
void save_corpus(const std::string& dir, const std::vector<SyntheticVideo>& videos,
                 const DataConfig& cfg);
// Reads a dump back; the stored shape must match cfg (DataError otherwise).
std::vector<SyntheticVideo> load_corpus(const std::string& dir, const DataConfig& cfg);

} // namespace vssl
