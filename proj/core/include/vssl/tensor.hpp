#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vssl/errors.hpp"

namespace vssl {

class Tensor;

namespace detail {

// One node of the reverse-mode tape. Leaves have no inputs and no backward
// function. The graph is acyclic by construction (ops only reference already
// existing tensors), and backward() visits each node exactly once.
struct TensorNode {
    std::vector<int> shape;
    std::vector<float> data;
    std::vector<float> grad; // allocated lazily; same length as data when present
    bool requires_grad = false;
    const char* op = ""; // "" marks a leaf
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::function<void(const TensorNode&)> backward;

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
    }
};

} // namespace detail

// Thread-local switch: while disabled, ops produce constant results with no
// tape (used for the momentum/key branch and for evaluation).
bool grad_enabled();
void set_grad_enabled(bool enabled);

class NoGradGuard {
public:
    NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Dense float32 tensor handle participating in a reverse-mode autodiff graph.
// Row-major storage; shapes are lists of positive dimensions. Tensors are
// treated as immutable once consumed by an op; raw_data() exists for leaf
// initialization and optimizer updates between steps.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, float value, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<float> data,
                            bool requires_grad = false);
    static Tensor scalar(float value);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const;
    int64_t numel() const;
    bool is_scalar() const;
    float item() const; // value of a scalar tensor

    const std::vector<float>& values() const;
    std::vector<float>& raw_data(); // leaf mutation only (init / optimizer)

    bool requires_grad() const;
    bool has_grad() const;
    const std::vector<float>& grad() const; // ContractError if absent
    void zero_grad();

    Tensor detach() const; // constant copy, no tape, no grad

    const char* op() const;

    std::shared_ptr<detail::TensorNode> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::TensorNode> node_;

    friend Tensor make_op_result(const char* op, std::vector<int> shape, std::vector<float> data,
                                 std::vector<Tensor> inputs,
                                 std::function<void(const detail::TensorNode&)> backward);
};

// Registers a new tape node from already computed forward data. This is how
// every op (including fused ones living outside this file) joins the graph.
Tensor make_op_result(const char* op, std::vector<int> shape, std::vector<float> data,
                      std::vector<Tensor> inputs,
                      std::function<void(const detail::TensorNode&)> backward);

// ---- operations -----------------------------------------------------------
// Every op registers a backward rule; gradients accumulate additively when a
// tensor feeds multiple consumers. Inner accumulations run in float64.

Tensor matmul(const Tensor& a, const Tensor& b); // [m,k] x [k,n] -> [m,n]

// Cross-correlation with zero padding over [C,T,H,W] input and
// [Cout,Cin,kT,kH,kW] kernels; output dims follow (n + 2p - k) / s + 1.
Tensor conv3d(const Tensor& input, const Tensor& kernels, std::array<int, 3> stride,
              std::array<int, 3> padding);

Tensor relu(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b); // shapes must match exactly
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor bias_add(const Tensor& x, const Tensor& bias); // [C,T,H,W] + [C]
Tensor mean_pool_global(const Tensor& x);             // [C,T,H,W] -> [C]

// Normalizes a 1-D vector to unit Euclidean norm. The strict variant throws
// DegenerateVectorError when the norm is <= kNormEps; the clamped variant
// divides by max(norm, kNormEps) and is the one used inside training.
inline constexpr double kNormEps = 1e-12;
Tensor l2_normalize(const Tensor& v);
Tensor l2_normalize_clamped(const Tensor& v);

// Per-sample standardization of a 1-D vector: (v - mean) / sqrt(var + eps).
// Parameter-free and batch-free (layer-norm style, no affine part).
Tensor standardize(const Tensor& v, double eps = 1e-5);

Tensor dot(const Tensor& a, const Tensor& b); // 1-D, equal length -> scalar
Tensor concat(const std::vector<Tensor>& parts); // 1-D parts -> 1-D
Tensor logsumexp(const Tensor& v);            // 1-D -> scalar, max-stabilized
Tensor pick(const Tensor& v, int index);      // 1-D element -> scalar
Tensor sum(const Tensor& x);                  // any shape -> scalar
Tensor reshape(const Tensor& x, std::vector<int> shape);

// Reverse pass from a scalar loss: fills .grad on every requires_grad leaf
// reachable from it. Repeated calls accumulate.
void backward(const Tensor& loss);

bool all_finite(const Tensor& x);

} // namespace vssl
