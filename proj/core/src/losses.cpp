#include "vssl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vssl {

void LossWeights::validate() const {
    if (temperature <= 0.0)
        throw ConfigError("temperature must be positive, got " + std::to_string(temperature));
    if (lambda_intra < 0.0 || lambda_nn < 0.0)
        throw ConfigError("loss weights must be non-negative");
    if (lambda_intra == 0.0 && lambda_nn == 0.0)
        throw ConfigError("lambda_intra and lambda_nn cannot both be zero");
}

namespace {

// The whole softmax cross-entropy is fused into one tape node with float64
// logits inside: only the final loss value is rounded to float32, which is
// what lets the result track the direct-formula evaluation to ~1e-7.
Tensor info_nce_node(const Tensor& query, const Tensor& positive,
                     std::vector<std::vector<float>> negatives, double tau) {
    const auto& q = query.values();
    const auto& k = positive.values();
    const size_t d = q.size();
    const size_t n = negatives.size();

    const auto dot_d = [d](const std::vector<float>& a, const std::vector<float>& b) {
        double s = 0.0;
        for (size_t i = 0; i < d; ++i) s += static_cast<double>(a[i]) * b[i];
        return s;
    };

    std::vector<double> logits(n + 1);
    logits[0] = dot_d(q, k) / tau;
    for (size_t i = 0; i < n; ++i) logits[i + 1] = dot_d(q, negatives[i]) / tau;
    double max_logit = logits[0];
    for (double l : logits) max_logit = std::max(max_logit, l);
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - max_logit);
    const double lse = max_logit + std::log(sum);
    const double loss = lse - logits[0];

    auto qn = query.node();
    auto kn = positive.node();
    return make_op_result(
        "info_nce", {1}, {static_cast<float>(loss)}, {query, positive},
        [qn, kn, negatives = std::move(negatives), logits = std::move(logits), lse,
         tau](const detail::TensorNode& self) {
            const double g = self.grad[0];
            const size_t d = qn->data.size();
            std::vector<double> probs(logits.size());
            for (size_t i = 0; i < logits.size(); ++i) probs[i] = std::exp(logits[i] - lse);
            // dL/dlogit_0 = p_0 - 1, dL/dlogit_i = p_i
            if (qn->requires_grad) {
                qn->ensure_grad();
                std::vector<double> dq(d, 0.0);
                for (size_t j = 0; j < d; ++j)
                    dq[j] = (probs[0] - 1.0) * static_cast<double>(kn->data[j]);
                for (size_t i = 0; i < negatives.size(); ++i) {
                    const double p = probs[i + 1];
                    const auto& neg = negatives[i];
                    for (size_t j = 0; j < d; ++j) dq[j] += p * static_cast<double>(neg[j]);
                }
                for (size_t j = 0; j < d; ++j)
                    qn->grad[j] += static_cast<float>(g * dq[j] / tau);
            }
            if (kn->requires_grad) {
                kn->ensure_grad();
                const double c = g * (probs[0] - 1.0) / tau;
                for (size_t j = 0; j < d; ++j)
                    kn->grad[j] += static_cast<float>(c * qn->data[j]);
            }
        });
}

} // namespace

Tensor info_nce(const Tensor& query, const Tensor& positive, std::span<const QueueEntry> negatives,
                double tau) {
    if (tau <= 0.0) throw ConfigError("info_nce: temperature must be positive");
    if (query.shape().size() != 1 || positive.shape() != query.shape())
        throw DimensionError("info_nce: query and positive must be equal-length vectors");
    std::vector<std::vector<float>> neg_vecs;
    neg_vecs.reserve(negatives.size());
    for (const auto& e : negatives) {
        if (e.embedding.size() != static_cast<size_t>(query.shape()[0]))
            throw DimensionError("info_nce: negative dimension mismatch");
        neg_vecs.push_back(e.embedding);
    }
    return info_nce_node(query, positive, std::move(neg_vecs), tau);
}

Tensor intra_loss(const Tensor& z1, const Tensor& z2, const EmbeddingQueue& q_intra, double tau) {
    return info_nce(z1, z2, q_intra.entries(), tau);
}

NnLossResult nn_loss(const Tensor& z1, const Tensor& z2, const EmbeddingQueue& q_nn, double tau,
                     int min_nn_pool) {
    if (tau <= 0.0) throw ConfigError("nn_loss: temperature must be positive");
    NnLossResult result;
    if (q_nn.size() < min_nn_pool) {
        result.loss = Tensor::scalar(0.0f); // constant: zero value, zero gradient
        return result;
    }
    const auto nn = q_nn.nearest_neighbor(z2.values());
    result.nn_index = nn.index;
    Tensor positive = Tensor::from_data({static_cast<int>(nn.entry->embedding.size())},
                                        nn.entry->embedding);
    const auto negatives = q_nn.negatives_excluding(nn.index);
    result.loss = info_nce(z1, positive, negatives, tau);
    return result;
}

LossBreakdown combined_loss(const PairEmbeddings& z, const EmbeddingQueue& q_intra,
                            const EmbeddingQueue& q_nn, const LossWeights& weights, int min_nn_pool) {
    weights.validate();
    const double tau = weights.temperature;

    Tensor intra_fwd = intra_loss(z.intra_1q, z.intra_2k, q_intra, tau);
    Tensor intra_bwd = intra_loss(z.intra_2q, z.intra_1k, q_intra, tau);
    Tensor intra_term = scale(add(intra_fwd, intra_bwd), 0.5);

    NnLossResult nn_fwd = nn_loss(z.nn_1q, z.nn_2k, q_nn, tau, min_nn_pool);
    NnLossResult nn_bwd = nn_loss(z.nn_2q, z.nn_1k, q_nn, tau, min_nn_pool);
    Tensor nn_term = scale(add(nn_fwd.loss, nn_bwd.loss), 0.5);

    LossBreakdown out;
    out.total = add(scale(intra_term, weights.lambda_intra), scale(nn_term, weights.lambda_nn));
    out.total_value = out.total.item();
    out.intra_term = intra_term.item();
    out.nn_term = nn_term.item();
    out.intra_fwd = intra_fwd.item();
    out.intra_bwd = intra_bwd.item();
    out.nn_fwd = nn_fwd.loss.item();
    out.nn_bwd = nn_bwd.loss.item();
    out.nn_index_fwd = nn_fwd.nn_index;
    out.nn_index_bwd = nn_bwd.nn_index;
    return out;
}

} // namespace vssl
