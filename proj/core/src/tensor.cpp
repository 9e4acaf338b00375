#include "vssl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace vssl {

namespace {

thread_local bool g_grad_enabled = true;

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

void check_shape(const std::vector<int>& shape, const char* op) {
    if (shape.empty()) throw DimensionError(std::string(op) + ": shape must have at least one dimension");
    for (int d : shape) {
        if (d <= 0) throw DimensionError(std::string(op) + ": dimensions must be positive");
    }
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

} // namespace

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool enabled) { g_grad_enabled = enabled; }

// ---- Tensor handle ----------------------------------------------------------

Tensor make_op_result(const char* op, std::vector<int> shape, std::vector<float> data,
                      std::vector<Tensor> inputs,
                      std::function<void(const detail::TensorNode&)> backward) {
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    bool needs_grad = false;
    if (g_grad_enabled) {
        for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
    }
    if (needs_grad) {
        node->requires_grad = true;
        node->op = op;
        node->inputs.reserve(inputs.size());
        for (const auto& in : inputs) node->inputs.push_back(in.node());
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    return from_data(shape, std::vector<float>(shape_numel(shape), 0.0f), requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, float value, bool requires_grad) {
    return from_data(shape, std::vector<float>(shape_numel(shape), value), requires_grad);
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<float> data, bool requires_grad) {
    check_shape(shape, "tensor");
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw DimensionError("tensor: product of shape " + shape_str(shape) +
                             " does not match data length " + std::to_string(data.size()));
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(float value) { return from_data({1}, {value}); }

const std::vector<int>& Tensor::shape() const {
    if (!node_) throw ContractError("tensor: undefined handle");
    return node_->shape;
}

int64_t Tensor::numel() const { return node_ ? node_->numel() : 0; }

bool Tensor::is_scalar() const { return node_ && node_->numel() == 1 && node_->shape.size() == 1; }

float Tensor::item() const {
    if (!is_scalar()) throw ContractError("item: tensor is not a scalar");
    return node_->data[0];
}

const std::vector<float>& Tensor::values() const {
    if (!node_) throw ContractError("tensor: undefined handle");
    return node_->data;
}

std::vector<float>& Tensor::raw_data() {
    if (!node_) throw ContractError("tensor: undefined handle");
    return node_->data;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->data.size(); }

const std::vector<float>& Tensor::grad() const {
    if (!has_grad()) throw ContractError("grad: no gradient present (run backward first)");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const {
    if (!node_) return Tensor();
    return from_data(node_->shape, node_->data, false);
}

const char* Tensor::op() const { return node_ ? node_->op : ""; }

// ---- ops --------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sa.size() != 2 || sb.size() != 2)
        throw DimensionError("matmul: expects 2-D operands, got " + shape_str(sa) + " and " + shape_str(sb));
    if (sa[1] != sb[0])
        throw DimensionError("matmul: inner dimensions disagree: " + shape_str(sa) + " x " + shape_str(sb));
    const int m = sa[0], k = sa[1], n = sb[1];
    const auto& A = a.values();
    const auto& B = b.values();
    std::vector<float> out(static_cast<size_t>(m) * n);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p)
                acc += static_cast<double>(A[static_cast<size_t>(i) * k + p]) * B[static_cast<size_t>(p) * n + j];
            out[static_cast<size_t>(i) * n + j] = static_cast<float>(acc);
        }
    }
    auto an = a.node();
    auto bn = b.node();
    return make_op_result(
        "matmul", {m, n}, std::move(out), {a, b}, [an, bn, m, k, n](const detail::TensorNode& self) {
            const auto& g = self.grad;
            if (an->requires_grad) {
                an->ensure_grad();
                // dA = dC . B^T
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (int j = 0; j < n; ++j)
                            acc += static_cast<double>(g[static_cast<size_t>(i) * n + j]) *
                                   bn->data[static_cast<size_t>(p) * n + j];
                        an->grad[static_cast<size_t>(i) * k + p] += static_cast<float>(acc);
                    }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                // dB = A^T . dC
                for (int p = 0; p < k; ++p)
                    for (int j = 0; j < n; ++j) {
                        double acc = 0.0;
                        for (int i = 0; i < m; ++i)
                            acc += static_cast<double>(an->data[static_cast<size_t>(i) * k + p]) *
                                   g[static_cast<size_t>(i) * n + j];
                        bn->grad[static_cast<size_t>(p) * n + j] += static_cast<float>(acc);
                    }
            }
        });
}

Tensor conv3d(const Tensor& input, const Tensor& kernels, std::array<int, 3> stride,
              std::array<int, 3> padding) {
    const auto& si = input.shape();
    const auto& sk = kernels.shape();
    if (si.size() != 4) throw DimensionError("conv3d: input must be [C,T,H,W], got " + shape_str(si));
    if (sk.size() != 5)
        throw DimensionError("conv3d: kernels must be [Cout,Cin,kT,kH,kW], got " + shape_str(sk));
    if (si[0] != sk[1])
        throw DimensionError("conv3d: input channels " + std::to_string(si[0]) +
                             " do not match kernel channels " + std::to_string(sk[1]));
    for (int s : stride)
        if (s <= 0) throw DimensionError("conv3d: strides must be positive");
    for (int p : padding)
        if (p < 0) throw DimensionError("conv3d: padding must be non-negative");

    const int cin = si[0], t = si[1], h = si[2], w = si[3];
    const int cout = sk[0], kt = sk[2], kh = sk[3], kw = sk[4];
    const int st = stride[0], sh = stride[1], sw = stride[2];
    const int pt = padding[0], ph = padding[1], pw = padding[2];
    if (kt > t + 2 * pt || kh > h + 2 * ph || kw > w + 2 * pw)
        throw DimensionError("conv3d: kernel " + shape_str(sk) + " larger than padded input " + shape_str(si));

    const int ot = (t + 2 * pt - kt) / st + 1;
    const int oh = (h + 2 * ph - kh) / sh + 1;
    const int ow = (w + 2 * pw - kw) / sw + 1;

    const auto& in = input.values();
    const auto& ker = kernels.values();
    std::vector<float> out(static_cast<size_t>(cout) * ot * oh * ow);

    const auto in_at = [&](int c, int it, int ih, int iw) -> float {
        return in[((static_cast<size_t>(c) * t + it) * h + ih) * w + iw];
    };

    for (int co = 0; co < cout; ++co) {
        const size_t kbase_c = static_cast<size_t>(co) * cin;
        for (int zt = 0; zt < ot; ++zt)
            for (int zh = 0; zh < oh; ++zh)
                for (int zw = 0; zw < ow; ++zw) {
                    double acc = 0.0;
                    for (int ci = 0; ci < cin; ++ci) {
                        const size_t kbase = ((kbase_c + ci) * kt) * kh * kw;
                        for (int a = 0; a < kt; ++a) {
                            const int it = zt * st - pt + a;
                            if (it < 0 || it >= t) continue;
                            for (int b = 0; b < kh; ++b) {
                                const int ih = zh * sh - ph + b;
                                if (ih < 0 || ih >= h) continue;
                                for (int c = 0; c < kw; ++c) {
                                    const int iw = zw * sw - pw + c;
                                    if (iw < 0 || iw >= w) continue;
                                    acc += static_cast<double>(in_at(ci, it, ih, iw)) *
                                           ker[kbase + (static_cast<size_t>(a) * kh + b) * kw + c];
                                }
                            }
                        }
                    }
                    out[((static_cast<size_t>(co) * ot + zt) * oh + zh) * ow + zw] =
                        static_cast<float>(acc);
                }
    }

    auto in_node = input.node();
    auto ker_node = kernels.node();
    return make_op_result(
        "conv3d", {cout, ot, oh, ow}, std::move(out), {input, kernels},
        [in_node, ker_node, cin, t, h, w, cout, kt, kh, kw, st, sh, sw, pt, ph, pw, ot, oh,
         ow](const detail::TensorNode& self) {
            const auto& g = self.grad;
            const bool need_in = in_node->requires_grad;
            const bool need_ker = ker_node->requires_grad;
            if (need_in) in_node->ensure_grad();
            if (need_ker) ker_node->ensure_grad();
            for (int co = 0; co < cout; ++co)
                for (int zt = 0; zt < ot; ++zt)
                    for (int zh = 0; zh < oh; ++zh)
                        for (int zw = 0; zw < ow; ++zw) {
                            const float go =
                                g[((static_cast<size_t>(co) * ot + zt) * oh + zh) * ow + zw];
                            if (go == 0.0f) continue;
                            for (int ci = 0; ci < cin; ++ci)
                                for (int a = 0; a < kt; ++a) {
                                    const int it = zt * st - pt + a;
                                    if (it < 0 || it >= t) continue;
                                    for (int b = 0; b < kh; ++b) {
                                        const int ih = zh * sh - ph + b;
                                        if (ih < 0 || ih >= h) continue;
                                        for (int c = 0; c < kw; ++c) {
                                            const int iw = zw * sw - pw + c;
                                            if (iw < 0 || iw >= w) continue;
                                            const size_t in_idx =
                                                ((static_cast<size_t>(ci) * t + it) * h + ih) * w + iw;
                                            const size_t k_idx =
                                                ((static_cast<size_t>(co) * cin + ci) * kt + a) * kh * kw +
                                                static_cast<size_t>(b) * kw + c;
                                            if (need_ker)
                                                ker_node->grad[k_idx] += in_node->data[in_idx] * go;
                                            if (need_in)
                                                in_node->grad[in_idx] += ker_node->data[k_idx] * go;
                                        }
                                    }
                                }
                        }
        });
}

Tensor relu(const Tensor& x) {
    const auto& in = x.values();
    std::vector<float> out(in.size());
    for (size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0f ? in[i] : 0.0f;
    auto xn = x.node();
    return make_op_result("relu", x.shape(), std::move(out), {x}, [xn](const detail::TensorNode& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            if (xn->data[i] > 0.0f) xn->grad[i] += self.grad[i];
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const auto& A = a.values();
    const auto& B = b.values();
    std::vector<float> out(A.size());
    for (size_t i = 0; i < A.size(); ++i) out[i] = A[i] + B[i];
    auto an = a.node();
    auto bn = b.node();
    return make_op_result("add", a.shape(), std::move(out), {a, b}, [an, bn](const detail::TensorNode& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError("sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const auto& A = a.values();
    const auto& B = b.values();
    std::vector<float> out(A.size());
    for (size_t i = 0; i < A.size(); ++i) out[i] = A[i] - B[i];
    auto an = a.node();
    auto bn = b.node();
    return make_op_result("sub", a.shape(), std::move(out), {a, b}, [an, bn](const detail::TensorNode& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
        }
    });
}

Tensor scale(const Tensor& x, double c) {
    const auto& in = x.values();
    std::vector<float> out(in.size());
    for (size_t i = 0; i < in.size(); ++i) out[i] = static_cast<float>(c * in[i]);
    auto xn = x.node();
    return make_op_result("scale", x.shape(), std::move(out), {x}, [xn, c](const detail::TensorNode& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            xn->grad[i] += static_cast<float>(c * self.grad[i]);
    });
}

Tensor bias_add(const Tensor& x, const Tensor& bias) {
    const auto& sx = x.shape();
    const auto& sb = bias.shape();
    if (sx.size() != 4 || sb.size() != 1 || sb[0] != sx[0])
        throw DimensionError("bias_add: expects [C,T,H,W] + [C], got " + shape_str(sx) + " + " + shape_str(sb));
    const int c = sx[0];
    const int64_t per_channel = static_cast<int64_t>(sx[1]) * sx[2] * sx[3];
    const auto& X = x.values();
    const auto& B = bias.values();
    std::vector<float> out(X.size());
    for (int ch = 0; ch < c; ++ch)
        for (int64_t i = 0; i < per_channel; ++i)
            out[ch * per_channel + i] = X[ch * per_channel + i] + B[ch];
    auto xn = x.node();
    auto bn = bias.node();
    return make_op_result("bias_add", sx, std::move(out), {x, bias},
                          [xn, bn, c, per_channel](const detail::TensorNode& self) {
                              if (xn->requires_grad) {
                                  xn->ensure_grad();
                                  for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
                              }
                              if (bn->requires_grad) {
                                  bn->ensure_grad();
                                  for (int ch = 0; ch < c; ++ch) {
                                      double acc = 0.0;
                                      for (int64_t i = 0; i < per_channel; ++i)
                                          acc += self.grad[ch * per_channel + i];
                                      bn->grad[ch] += static_cast<float>(acc);
                                  }
                              }
                          });
}

Tensor mean_pool_global(const Tensor& x) {
    const auto& sx = x.shape();
    if (sx.size() != 4) throw DimensionError("mean_pool_global: expects [C,T,H,W], got " + shape_str(sx));
    const int c = sx[0];
    const int64_t per_channel = static_cast<int64_t>(sx[1]) * sx[2] * sx[3];
    const auto& X = x.values();
    std::vector<float> out(c);
    for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int64_t i = 0; i < per_channel; ++i) acc += X[ch * per_channel + i];
        out[ch] = static_cast<float>(acc / static_cast<double>(per_channel));
    }
    auto xn = x.node();
    return make_op_result("mean_pool_global", {c}, std::move(out), {x},
                          [xn, c, per_channel](const detail::TensorNode& self) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad();
                              const double inv = 1.0 / static_cast<double>(per_channel);
                              for (int ch = 0; ch < c; ++ch) {
                                  const float g = static_cast<float>(self.grad[ch] * inv);
                                  for (int64_t i = 0; i < per_channel; ++i)
                                      xn->grad[ch * per_channel + i] += g;
                              }
                          });
}

namespace {

Tensor l2_normalize_impl(const Tensor& v, bool clamp) {
    const auto& sv = v.shape();
    if (sv.size() != 1) throw DimensionError("l2_normalize: expects a 1-D vector, got " + shape_str(sv));
    const auto& x = v.values();
    double sq = 0.0;
    for (float xi : x) sq += static_cast<double>(xi) * xi;
    double norm = std::sqrt(sq);
    if (norm <= kNormEps) {
        if (!clamp)
            throw DegenerateVectorError("l2_normalize: vector norm " + std::to_string(norm) +
                                        " below " + std::to_string(kNormEps));
        norm = kNormEps;
    }
    const double inv = 1.0 / norm;
    std::vector<float> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = static_cast<float>(x[i] * inv);
    auto vn = v.node();
    return make_op_result("l2_normalize", sv, std::move(out), {v},
                          [vn, norm](const detail::TensorNode& self) {
                              if (!vn->requires_grad) return;
                              vn->ensure_grad();
                              // dx = (g - y (y. g)) / norm with y the normalized output
                              double ydotg = 0.0;
                              for (size_t i = 0; i < self.data.size(); ++i)
                                  ydotg += static_cast<double>(self.data[i]) * self.grad[i];
                              const double inv = 1.0 / norm;
                              for (size_t i = 0; i < self.data.size(); ++i)
                                  vn->grad[i] += static_cast<float>(
                                      (self.grad[i] - self.data[i] * ydotg) * inv);
                          });
}

} // namespace

Tensor l2_normalize(const Tensor& v) { return l2_normalize_impl(v, false); }
Tensor l2_normalize_clamped(const Tensor& v) { return l2_normalize_impl(v, true); }

Tensor standardize(const Tensor& v, double eps) {
    const auto& sv = v.shape();
    if (sv.size() != 1) throw DimensionError("standardize: expects a 1-D vector, got " + shape_str(sv));
    if (eps <= 0.0) throw ContractError("standardize: eps must be positive");
    const auto& x = v.values();
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (float xi : x) mean += xi;
    mean /= n;
    double var = 0.0;
    for (float xi : x) var += (xi - mean) * (xi - mean);
    var /= n;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    std::vector<float> out(x.size());
    for (size_t i = 0; i < x.size(); ++i)
        out[i] = static_cast<float>((x[i] - mean) * inv_std);
    auto vn = v.node();
    return make_op_result("standardize", sv, std::move(out), {v},
                          [vn, inv_std, n](const detail::TensorNode& self) {
                              if (!vn->requires_grad) return;
                              vn->ensure_grad();
                              // dL/dx = inv_std * (g - mean(g) - y * mean(g * y))
                              double g_mean = 0.0, gy_mean = 0.0;
                              for (size_t i = 0; i < self.data.size(); ++i) {
                                  g_mean += self.grad[i];
                                  gy_mean += static_cast<double>(self.grad[i]) * self.data[i];
                              }
                              g_mean /= n;
                              gy_mean /= n;
                              for (size_t i = 0; i < self.data.size(); ++i)
                                  vn->grad[i] += static_cast<float>(
                                      inv_std * (self.grad[i] - g_mean - self.data[i] * gy_mean));
                          });
}

Tensor dot(const Tensor& a, const Tensor& b) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sa.size() != 1 || sb.size() != 1 || sa[0] != sb[0])
        throw DimensionError("dot: expects equal-length vectors, got " + shape_str(sa) + " and " + shape_str(sb));
    const auto& A = a.values();
    const auto& B = b.values();
    double acc = 0.0;
    for (size_t i = 0; i < A.size(); ++i) acc += static_cast<double>(A[i]) * B[i];
    auto an = a.node();
    auto bn = b.node();
    return make_op_result("dot", {1}, {static_cast<float>(acc)}, {a, b},
                          [an, bn](const detail::TensorNode& self) {
                              const float g = self.grad[0];
                              if (an->requires_grad) {
                                  an->ensure_grad();
                                  for (size_t i = 0; i < an->data.size(); ++i)
                                      an->grad[i] += bn->data[i] * g;
                              }
                              if (bn->requires_grad) {
                                  bn->ensure_grad();
                                  for (size_t i = 0; i < bn->data.size(); ++i)
                                      bn->grad[i] += an->data[i] * g;
                              }
                          });
}

Tensor concat(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat: needs at least one part");
    std::vector<float> out;
    std::vector<int64_t> offsets;
    for (const auto& p : parts) {
        if (p.shape().size() != 1) throw DimensionError("concat: parts must be 1-D");
        offsets.push_back(static_cast<int64_t>(out.size()));
        const auto& v = p.values();
        out.insert(out.end(), v.begin(), v.end());
    }
    std::vector<std::shared_ptr<detail::TensorNode>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    const int total = static_cast<int>(out.size());
    return make_op_result("concat", {total}, std::move(out), parts,
                          [nodes, offsets](const detail::TensorNode& self) {
                              for (size_t k = 0; k < nodes.size(); ++k) {
                                  auto& n = nodes[k];
                                  if (!n->requires_grad) continue;
                                  n->ensure_grad();
                                  for (size_t i = 0; i < n->data.size(); ++i)
                                      n->grad[i] += self.grad[offsets[k] + i];
                              }
                          });
}

Tensor logsumexp(const Tensor& v) {
    const auto& sv = v.shape();
    if (sv.size() != 1) throw DimensionError("logsumexp: expects a 1-D vector, got " + shape_str(sv));
    const auto& x = v.values();
    double m = -std::numeric_limits<double>::infinity();
    for (float xi : x) m = std::max(m, static_cast<double>(xi));
    double s = 0.0;
    for (float xi : x) s += std::exp(static_cast<double>(xi) - m);
    const double lse = m + std::log(s);
    auto vn = v.node();
    return make_op_result("logsumexp", {1}, {static_cast<float>(lse)}, {v},
                          [vn, lse](const detail::TensorNode& self) {
                              if (!vn->requires_grad) return;
                              vn->ensure_grad();
                              const double g = self.grad[0];
                              for (size_t i = 0; i < vn->data.size(); ++i)
                                  vn->grad[i] += static_cast<float>(
                                      g * std::exp(static_cast<double>(vn->data[i]) - lse));
                          });
}

Tensor pick(const Tensor& v, int index) {
    const auto& sv = v.shape();
    if (sv.size() != 1) throw DimensionError("pick: expects a 1-D vector, got " + shape_str(sv));
    if (index < 0 || index >= sv[0])
        throw ContractError("pick: index " + std::to_string(index) + " out of range for length " +
                            std::to_string(sv[0]));
    auto vn = v.node();
    return make_op_result("pick", {1}, {v.values()[static_cast<size_t>(index)]}, {v},
                          [vn, index](const detail::TensorNode& self) {
                              if (!vn->requires_grad) return;
                              vn->ensure_grad();
                              vn->grad[static_cast<size_t>(index)] += self.grad[0];
                          });
}

Tensor sum(const Tensor& x) {
    const auto& in = x.values();
    double acc = 0.0;
    for (float v : in) acc += v;
    auto xn = x.node();
    return make_op_result("sum", {1}, {static_cast<float>(acc)}, {x},
                          [xn](const detail::TensorNode& self) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad();
                              const float g = self.grad[0];
                              for (size_t i = 0; i < xn->data.size(); ++i) xn->grad[i] += g;
                          });
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
    check_shape(shape, "reshape");
    if (shape_numel(shape) != x.numel())
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    auto xn = x.node();
    return make_op_result("reshape", std::move(shape), x.values(), {x},
                          [xn](const detail::TensorNode& self) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad();
                              for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
                          });
}

// ---- backward ---------------------------------------------------------------

void backward(const Tensor& loss) {
    if (!loss.defined()) throw ContractError("backward: undefined tensor");
    if (!loss.is_scalar()) throw ContractError("backward: loss must be a scalar tensor");

    // Iterative post-order topological sort over the tape.
    std::vector<detail::TensorNode*> order;
    std::unordered_set<detail::TensorNode*> visited;
    struct Frame {
        detail::TensorNode* node;
        size_t next_input;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.node().get(), 0});
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_input < f.node->inputs.size()) {
            detail::TensorNode* child = f.node->inputs[f.next_input++].get();
            if (visited.insert(child).second) stack.push_back({child, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    auto* root = loss.node().get();
    root->ensure_grad();
    root->grad[0] += 1.0f;

    // Reverse topological order: every node's grad is complete before its
    // backward rule runs, so the tape is traversed exactly once.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::TensorNode* node = *it;
        if (!node->backward) continue;
        if (node->grad.size() != node->data.size()) continue; // unreached subgraph
        node->backward(*node);
    }

    // Leaf gradients persist and accumulate across calls; intermediate
    // gradients are scratch state and must not leak into a later pass.
    for (detail::TensorNode* node : order)
        if (node->backward) node->grad.clear();
}

bool all_finite(const Tensor& x) {
    for (float v : x.values())
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace vssl
