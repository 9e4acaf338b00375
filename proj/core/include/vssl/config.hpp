#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vssl/data.hpp"
#include "vssl/encoder.hpp"
#include "vssl/losses.hpp"

namespace vssl {

enum class TrainerMode { momentum, non_momentum };

// Every hyperparameter of a run, with the documented desk-scale defaults.
// Loadable from a flat `key = value` text file (# comments allowed, unknown
// keys rejected).
struct TrainConfig {
    // optimization
    int epochs = 30;
    int batch_size = 32;
    double base_lr = 0.05; // scaled down from large-batch recipes
    int warmup_epochs = 5;
    double sgd_momentum = 0.9;
    double weight_decay = 1e-4;
    // loss
    double temperature = 0.1;
    double lambda_intra = 1.0;
    double lambda_nn = 1.0;
    // queues
    int queue_capacity = 512;
    int min_nn_pool = 64; // NN term stays exactly 0 below this fill level
    // momentum encoder
    double momentum_init = 0.994;
    TrainerMode mode = TrainerMode::momentum;
    // bookkeeping
    uint64_t seed = 42;
    int checkpoint_interval = 10; // epochs between checkpoints
    // data
    int n_videos = 320;
    int n_classes = 16;
    int total_frames = 16;
    int canvas_size = 24;
    int clip_len = 4;
    int crop_size = 16;
    // encoder
    std::vector<int> conv_channels = {8, 16, 32};
    int head_hidden = 32;
    int embed_dim = 16;
    // evaluation
    double test_fraction = 0.2;
    int probe_epochs = 200;
    double probe_lr = 1.0;
    std::vector<double> fewshot_fractions = {0.10, 0.25, 0.50};
    std::vector<int> retrieval_ks = {1, 5, 10, 20};

    static TrainConfig from_file(const std::string& path);
    static TrainConfig from_text(const std::string& text);

    // Canonical `key = value` dump (fixed key order); feeds the config hash
    // and the checkpoint snapshot.
    std::string canonical_text() const;
    uint64_t hash() const;

    void validate() const;

    DataConfig data_config() const;
    EncoderConfig encoder_config() const;
    LossWeights loss_weights() const;

    int steps_per_epoch() const { return n_videos / batch_size; }
    int64_t total_steps() const { return static_cast<int64_t>(epochs) * steps_per_epoch(); }
};

const char* to_string(TrainerMode mode);
TrainerMode trainer_mode_from_string(const std::string& s);

} // namespace vssl
