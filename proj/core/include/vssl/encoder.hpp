#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vssl/rng.hpp"
#include "vssl/tensor.hpp"

namespace vssl {

// Toy spatiotemporal backbone: a stack of 3x3x3 conv layers (temporal stride
// 1, spatial stride 2, padding 1, relu) followed by global average pooling.
// No batch norm anywhere.
struct EncoderConfig {
    int in_channels = 1;
    int clip_len = 4;
    int clip_height = 16;
    int clip_width = 16;
    std::vector<int> conv_channels = {8, 16, 32};
    int head_hidden = 32;
    int embed_dim = 16;

    int backbone_dim() const { return conv_channels.back(); }
    // Checks that every layer output stays at least 1x1x1 for the configured
    // clip shape; throws ConfigError otherwise.
    void validate() const;
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

enum class Branch { intra, nn };
enum class Side { query, key };

const char* to_string(Branch b);
const char* to_string(Side s);

namespace detail_encoder {

struct ConvLayer {
    Tensor weight; // [Cout,Cin,3,3,3]
    Tensor bias;   // [Cout]
};

struct ProjectionHead {
    Tensor w1, b1; // [hidden, D_b], [hidden]
    Tensor w2, b2; // [embed, hidden], [embed]
    Tensor forward(const Tensor& features) const; // unnormalized [embed]
};

struct EncoderStack {
    std::vector<ConvLayer> layers;
    ProjectionHead head_intra;
    ProjectionHead head_nn;
    Tensor features(const Tensor& clip) const; // backbone GAP output [D_b]
};

} // namespace detail_encoder

// Query encoder plus its momentum twin. Key weights never enter the autodiff
// tape or the optimizer; they move only through momentum_update (or an
// explicit copy in non-momentum mode).
class EncoderPair {
public:
    EncoderPair(const EncoderConfig& cfg, uint64_t seed);

    const EncoderConfig& config() const { return cfg_; }

    // l2-normalized projection output for one clip. Key-side results carry no
    // gradient tape. Throws DimensionError when the clip shape is off.
    Tensor embed(const Tensor& clip, Branch branch, Side side) const;

    struct BranchEmbeddings {
        Tensor intra;
        Tensor nn;
    };
    // Both branch embeddings from a single backbone pass.
    BranchEmbeddings embed_both(const Tensor& clip, Side side) const;

    // Backbone features after global average pooling, before any MLP head
    // (the representation used for every downstream evaluation).
    Tensor features(const Tensor& clip, Side side) const;

    // theta_k <- m * theta_k + (1 - m) * theta_q for every key tensor,
    // projection heads included. m outside [0,1] is a ConfigError.
    void momentum_update(double m);

    void copy_query_to_key();

    std::vector<NamedTensor> query_parameters();
    std::vector<NamedTensor> key_parameters();
    std::vector<NamedTensor> query_parameters() const;
    std::vector<NamedTensor> key_parameters() const;

private:
    void check_clip(const Tensor& clip) const;

    EncoderConfig cfg_;
    detail_encoder::EncoderStack query_;
    detail_encoder::EncoderStack key_;
};

// Cosine anneal of the EMA coefficient from m0 toward 1.0:
// m(t) = 1 - (1 - m0) * (cos(pi t) + 1) / 2 for t in [0,1].
double anneal_momentum(double epoch_progress, double m0);

// He-normal initialization used for conv and linear weights; biases draw
// uniformly from +-1/sqrt(fan_in).
void he_init(Tensor& weight, int fan_in, Rng& rng);
void bias_init(Tensor& bias, int fan_in, Rng& rng);

} // namespace vssl
