#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vssl/config.hpp"
#include "vssl/data.hpp"
#include "vssl/encoder.hpp"

namespace vssl {

// Frozen backbone features: one row per video, taken after global average
// pooling and before any MLP head, from a center temporal window and center
// spatial crop of the un-augmented video.
struct FrozenFeatures {
    int dim = 0;
    std::vector<float> data; // size() == rows * dim
    std::vector<int> class_ids;
    std::vector<int64_t> video_ids;
    std::string split;

    int rows() const { return static_cast<int>(class_ids.size()); }
    std::span<const float> row(int i) const {
        return {data.data() + static_cast<size_t>(i) * dim, static_cast<size_t>(dim)};
    }
};

struct EvalSplit {
    std::vector<int> train_indices;
    std::vector<int> test_indices;
};

// Class-stratified deterministic split (default 80/20 via cfg.test_fraction).
EvalSplit stratified_split(const std::vector<SyntheticVideo>& videos, double test_fraction,
                           uint64_t seed);

// Center-crop feature extraction through the query encoder.
FrozenFeatures extract_features(const EncoderPair& pair, const std::vector<SyntheticVideo>& videos,
                                std::span<const int> indices, const std::string& split_tag,
                                const DataConfig& cfg);

// Multinomial logistic regression by full-batch gradient descent on
// standardized features; returns test top-1 accuracy in [0,1]. The step is
// backtracked (lr/10) whenever it fails to decrease the training loss.
double linear_probe(const FrozenFeatures& train, const FrozenFeatures& test, int epochs, double lr);

struct RetrievalResult {
    std::vector<int> ks;
    std::vector<double> recall; // aligned with ks, non-decreasing
};

// R@k by cosine similarity: a query is a hit iff any of its top-k gallery
// rows shares its class.
RetrievalResult recall_at_k(const FrozenFeatures& query, const FrozenFeatures& gallery,
                            const std::vector<int>& ks);

// Class-stratified deterministic subsample; fraction 1.0 is the identity.
FrozenFeatures few_shot_subset(const FrozenFeatures& features, double fraction, uint64_t seed);

// 1 - ((K-1)/K)^q: chance that a same-class sample sits among q uniformly
// drawn negatives over K balanced classes.
double cooccurrence_probability(int n_classes, int64_t queue_size);

// Mean fraction of each video's top-5 neighbors (self excluded, NN-head
// query-branch embeddings) that share its class.
double nn_quality(const EncoderPair& pair, const std::vector<SyntheticVideo>& videos,
                  const DataConfig& cfg);

// Binary feature-file round-trip (external interface for downstream tools).
void save_features(const FrozenFeatures& features, const std::string& path);
FrozenFeatures load_features(const std::string& path);

// Rebuilds an encoder pair from a checkpoint's stored weights. The config
// must describe the same architecture (ConfigError otherwise).
EncoderPair encoder_from_checkpoint(const std::string& path, const TrainConfig& cfg);

} // namespace vssl
