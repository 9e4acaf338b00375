#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vssl/config.hpp"
#include "vssl/data.hpp"
#include "vssl/encoder.hpp"
#include "vssl/losses.hpp"
#include "vssl/queue.hpp"

namespace vssl {

// Linear warmup to base_lr over warmup_steps, then half-period cosine decay
// to ~0 across the remaining steps.
double lr_schedule(int64_t step, int64_t total_steps, int64_t warmup_steps, double base_lr);

// One metrics.csv row; the exact column set is part of the external
// interface. nn_same_class_frac is NaN on steps where the NN gate is closed.
struct MetricsRow {
    int64_t step = 0;
    int epoch = 0;
    double lr = 0.0;
    double m = 0.0;
    double loss_total = 0.0;
    double loss_intra = 0.0;
    double loss_nn = 0.0;
    int qintra_len = 0;
    int qnn_len = 0;
    double nn_same_class_frac = 0.0;

    static const char* csv_header(); // "step,epoch,lr,..."
    std::string to_csv() const;
    static MetricsRow from_csv(const std::string& line, int lineno);
};

// Full training state snapshot. Save/load round-trips reproduce the next
// step bit-identically.
struct Checkpoint {
    uint32_t format_version = 1;
    std::string config_text; // canonical key=value snapshot
    std::vector<std::pair<std::string, std::vector<float>>> query_weights;
    std::vector<std::pair<std::string, std::vector<float>>> key_weights;
    std::vector<std::pair<std::string, std::vector<float>>> velocity; // SGD momentum buffers
    std::vector<QueueEntry> q_intra, q_nn;
    int64_t global_step = 0;
    int epoch = 0;
    std::string rng_state;
};

// Writes the binary checkpoint plus a plain-text manifest at <path>.txt.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// SGD with classic momentum and L2 weight decay folded into the gradient:
// v <- mu v + (g + wd w); w <- w - lr v. Applies to query weights only.
class SgdMomentum {
public:
    SgdMomentum(double momentum, double weight_decay);
    void attach(const std::vector<NamedTensor>& params); // zero velocity buffers
    void step(std::vector<NamedTensor>& params, double lr);
    std::vector<std::pair<std::string, std::vector<float>>> state() const;
    void restore(const std::vector<std::pair<std::string, std::vector<float>>>& state,
                 const std::vector<NamedTensor>& params);

private:
    double momentum_;
    double weight_decay_;
    std::vector<std::string> names_;
    std::vector<std::vector<float>> velocity_;
};

// The pretraining loop: batched two-branch forward, combined loss, SGD on
// the query weights, EMA (or mirror) update of the key weights, queue
// updates, metrics, checkpoints.
class Trainer {
public:
    explicit Trainer(const TrainConfig& cfg);
    static Trainer from_checkpoint(const std::string& path, const TrainConfig& cfg);

    // Runs one step; advances counters. When grad_out is non-null it receives
    // the flattened query-weight gradient of the step (test hook).
    MetricsRow train_step(std::vector<float>* grad_out = nullptr);

    // Full loop with metrics.csv and checkpoints under out_dir. Returns the
    // path of the final checkpoint.
    std::string run(const std::string& out_dir);

    const TrainConfig& config() const { return cfg_; }
    EncoderPair& encoder() { return pair_; }
    const EncoderPair& encoder() const { return pair_; }
    const EmbeddingQueue& queue_intra() const { return q_intra_; }
    const EmbeddingQueue& queue_nn() const { return q_nn_; }
    const std::vector<SyntheticVideo>& corpus() const { return corpus_; }
    int64_t global_step() const { return global_step_; }
    int epoch() const { return static_cast<int>(global_step_ / cfg_.steps_per_epoch()); }

    Checkpoint make_checkpoint() const;

    // Drops the NN branch entirely (no NN embeddings, loss term, or queue
    // traffic): the runtime equivalent of building without the NN path.
    void set_nn_branch_enabled(bool enabled) { nn_branch_enabled_ = enabled; }

private:
    std::vector<int> batch_indices(int64_t step) const;
    double anneal_progress(int64_t step) const;

    TrainConfig cfg_;
    EncoderPair pair_;
    EmbeddingQueue q_intra_;
    EmbeddingQueue q_nn_;
    std::vector<SyntheticVideo> corpus_;
    SgdMomentum opt_;
    int64_t global_step_ = 0;
    std::string master_rng_state_;
    bool nn_branch_enabled_ = true;
};

} // namespace vssl
