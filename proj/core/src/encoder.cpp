#include "vssl/encoder.hpp"

#include <cmath>

namespace vssl {

namespace {

constexpr int kKernel = 3;
constexpr std::array<int, 3> kStride = {1, 2, 2};
constexpr std::array<int, 3> kPadding = {1, 1, 1};

int conv_out(int n, int pad, int kernel, int stride) { return (n + 2 * pad - kernel) / stride + 1; }

} // namespace

void EncoderConfig::validate() const {
    if (in_channels <= 0 || clip_len <= 0 || clip_height <= 0 || clip_width <= 0)
        throw ConfigError("encoder: clip dimensions must be positive");
    if (conv_channels.empty()) throw ConfigError("encoder: conv_channels must not be empty");
    for (int c : conv_channels)
        if (c <= 0) throw ConfigError("encoder: conv channel counts must be positive");
    if (head_hidden <= 0 || embed_dim <= 0)
        throw ConfigError("encoder: head dimensions must be positive");
    int t = clip_len, h = clip_height, w = clip_width;
    for (size_t i = 0; i < conv_channels.size(); ++i) {
        t = conv_out(t, kPadding[0], kKernel, kStride[0]);
        h = conv_out(h, kPadding[1], kKernel, kStride[1]);
        w = conv_out(w, kPadding[2], kKernel, kStride[2]);
        if (t < 1 || h < 1 || w < 1)
            throw ConfigError("encoder: layer " + std::to_string(i) +
                              " collapses the clip below 1x1x1; shrink the stack or grow the clip");
    }
}

const char* to_string(Branch b) { return b == Branch::intra ? "intra" : "nn"; }
const char* to_string(Side s) { return s == Side::query ? "query" : "key"; }

void he_init(Tensor& weight, int fan_in, Rng& rng) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& w : weight.raw_data()) w = static_cast<float>(rng.normal() * stddev);
}

// Uniform bias init over +-1/sqrt(fan_in). A zero bias would leave every
// background pixel's preactivation exactly on the relu kink (the synthetic
// canvas is exactly zero there), killing the gradient through most units.
void bias_init(Tensor& bias, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& b : bias.raw_data()) b = static_cast<float>(rng.uniform(-bound, bound));
}

namespace detail_encoder {

Tensor ProjectionHead::forward(const Tensor& features) const {
    const int d = features.shape()[0];
    Tensor h = reshape(matmul(w1, reshape(features, {d, 1})), {w1.shape()[0]});
    h = relu(add(h, b1));
    Tensor out = reshape(matmul(w2, reshape(h, {w2.shape()[1], 1})), {w2.shape()[0]});
    return add(out, b2);
}

Tensor EncoderStack::features(const Tensor& clip) const {
    Tensor x = clip;
    for (const auto& layer : layers) {
        x = conv3d(x, layer.weight, kStride, kPadding);
        x = relu(bias_add(x, layer.bias));
    }
    return mean_pool_global(x);
}

} // namespace detail_encoder

namespace {

detail_encoder::ProjectionHead make_head(int in_dim, int hidden, int out, Rng& rng, bool requires_grad) {
    detail_encoder::ProjectionHead head;
    head.w1 = Tensor::zeros({hidden, in_dim}, requires_grad);
    he_init(head.w1, in_dim, rng);
    head.b1 = Tensor::zeros({hidden}, requires_grad);
    bias_init(head.b1, in_dim, rng);
    head.w2 = Tensor::zeros({out, hidden}, requires_grad);
    he_init(head.w2, hidden, rng);
    head.b2 = Tensor::zeros({out}, requires_grad);
    bias_init(head.b2, hidden, rng);
    return head;
}

detail_encoder::EncoderStack make_stack(const EncoderConfig& cfg, Rng& rng, bool requires_grad) {
    detail_encoder::EncoderStack stack;
    int cin = cfg.in_channels;
    for (int cout : cfg.conv_channels) {
        detail_encoder::ConvLayer layer;
        const int fan_in = cin * kKernel * kKernel * kKernel;
        layer.weight = Tensor::zeros({cout, cin, kKernel, kKernel, kKernel}, requires_grad);
        he_init(layer.weight, fan_in, rng);
        layer.bias = Tensor::zeros({cout}, requires_grad);
        bias_init(layer.bias, fan_in, rng);
        stack.layers.push_back(std::move(layer));
        cin = cout;
    }
    stack.head_intra = make_head(cfg.backbone_dim(), cfg.head_hidden, cfg.embed_dim, rng, requires_grad);
    stack.head_nn = make_head(cfg.backbone_dim(), cfg.head_hidden, cfg.embed_dim, rng, requires_grad);
    return stack;
}

void collect(const detail_encoder::EncoderStack& stack, const std::string& prefix,
             std::vector<NamedTensor>& out) {
    for (size_t i = 0; i < stack.layers.size(); ++i) {
        out.push_back({prefix + ".conv" + std::to_string(i) + ".weight", stack.layers[i].weight});
        out.push_back({prefix + ".conv" + std::to_string(i) + ".bias", stack.layers[i].bias});
    }
    const auto heads = {std::pair{"head_intra", &stack.head_intra}, std::pair{"head_nn", &stack.head_nn}};
    for (const auto& [name, head] : heads) {
        out.push_back({prefix + "." + name + ".w1", head->w1});
        out.push_back({prefix + "." + name + ".b1", head->b1});
        out.push_back({prefix + "." + name + ".w2", head->w2});
        out.push_back({prefix + "." + name + ".b2", head->b2});
    }
}

} // namespace

EncoderPair::EncoderPair(const EncoderConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(mix64(seed, 0x454e43u)); // encoder init stream
    query_ = make_stack(cfg_, rng, true);
    key_ = make_stack(cfg_, rng, false); // immediately overwritten by the copy below
    copy_query_to_key();
}

void EncoderPair::check_clip(const Tensor& clip) const {
    const auto& s = clip.shape();
    if (s.size() != 4 || s[0] != cfg_.in_channels || s[1] != cfg_.clip_len ||
        s[2] != cfg_.clip_height || s[3] != cfg_.clip_width)
        throw DimensionError("embed: clip shape does not match the configured input " +
                             std::to_string(cfg_.in_channels) + "x" + std::to_string(cfg_.clip_len) +
                             "x" + std::to_string(cfg_.clip_height) + "x" + std::to_string(cfg_.clip_width));
}

Tensor EncoderPair::embed(const Tensor& clip, Branch branch, Side side) const {
    check_clip(clip);
    const auto& stack = side == Side::query ? query_ : key_;
    const auto& head = branch == Branch::intra ? stack.head_intra : stack.head_nn;
    const auto run = [&] {
        return l2_normalize_clamped(head.forward(standardize(stack.features(clip))));
    };
    if (side == Side::key) {
        NoGradGuard ng;
        return run();
    }
    return run();
}

EncoderPair::BranchEmbeddings EncoderPair::embed_both(const Tensor& clip, Side side) const {
    check_clip(clip);
    const auto& stack = side == Side::query ? query_ : key_;
    const auto run = [&] {
        Tensor feat = standardize(stack.features(clip));
        BranchEmbeddings out;
        out.intra = l2_normalize_clamped(stack.head_intra.forward(feat));
        out.nn = l2_normalize_clamped(stack.head_nn.forward(feat));
        return out;
    };
    if (side == Side::key) {
        NoGradGuard ng;
        return run();
    }
    return run();
}

Tensor EncoderPair::features(const Tensor& clip, Side side) const {
    check_clip(clip);
    const auto& stack = side == Side::query ? query_ : key_;
    if (side == Side::key) {
        NoGradGuard ng;
        return stack.features(clip);
    }
    return stack.features(clip);
}

void EncoderPair::momentum_update(double m) {
    if (m < 0.0 || m > 1.0)
        throw ConfigError("momentum_update: m must lie in [0,1], got " + std::to_string(m));
    auto q = query_parameters();
    auto k = key_parameters();
    for (size_t i = 0; i < q.size(); ++i) {
        const auto& src = q[i].tensor.values();
        auto& dst = k[i].tensor.raw_data();
        for (size_t j = 0; j < dst.size(); ++j)
            dst[j] = static_cast<float>(m * dst[j] + (1.0 - m) * src[j]);
    }
}

void EncoderPair::copy_query_to_key() {
    auto q = query_parameters();
    auto k = key_parameters();
    for (size_t i = 0; i < q.size(); ++i) k[i].tensor.raw_data() = q[i].tensor.values();
}

std::vector<NamedTensor> EncoderPair::query_parameters() {
    std::vector<NamedTensor> out;
    collect(query_, "query", out);
    return out;
}

std::vector<NamedTensor> EncoderPair::key_parameters() {
    std::vector<NamedTensor> out;
    collect(key_, "key", out);
    return out;
}

std::vector<NamedTensor> EncoderPair::query_parameters() const {
    std::vector<NamedTensor> out;
    collect(query_, "query", out);
    return out;
}

std::vector<NamedTensor> EncoderPair::key_parameters() const {
    std::vector<NamedTensor> out;
    collect(key_, "key", out);
    return out;
}

double anneal_momentum(double epoch_progress, double m0) {
    if (epoch_progress < 0.0 || epoch_progress > 1.0)
        throw ContractError("anneal_momentum: progress must lie in [0,1]");
    return 1.0 - (1.0 - m0) * (std::cos(M_PI * epoch_progress) + 1.0) / 2.0;
}

} // namespace vssl
