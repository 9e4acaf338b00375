#pragma once

#include <span>
#include <vector>

#include "vssl/queue.hpp"
#include "vssl/tensor.hpp"

namespace vssl {

struct LossWeights {
    double lambda_intra = 1.0;
    double lambda_nn = 1.0;
    double temperature = 0.1;

    // tau must be positive, lambdas non-negative and not both zero.
    void validate() const;
};

// Per-step loss decomposition. total = lambda_intra * intra_term +
// lambda_nn * nn_term; the *_fwd/*_bwd fields are the two symmetric
// directions (z1 -> z2 and z2 -> z1) before the 1/2 averaging.
struct LossBreakdown {
    Tensor total;
    double total_value = 0.0;
    double intra_term = 0.0;
    double nn_term = 0.0;
    double intra_fwd = 0.0, intra_bwd = 0.0;
    double nn_fwd = 0.0, nn_bwd = 0.0;
    int nn_index_fwd = -1; // queue index of the NN positive, -1 when gated
    int nn_index_bwd = -1;
};

// InfoNCE: -log( exp(q.k+ / tau) / (exp(q.k+ / tau) + sum_i exp(q.n_i / tau)) ).
// Logits are max-stabilized inside logsumexp. Differentiable w.r.t. query and
// positive; negatives come from the queue and stay constant. With no
// negatives the loss is exactly 0 (single-term softmax), which keeps the
// cold-start gate composable.
Tensor info_nce(const Tensor& query, const Tensor& positive, std::span<const QueueEntry> negatives,
                double tau);

// Eq. 2: the whole intra queue serves as negatives.
Tensor intra_loss(const Tensor& z1, const Tensor& z2, const EmbeddingQueue& q_intra, double tau);

struct NnLossResult {
    Tensor loss;
    int nn_index = -1; // -1 when the min-pool gate is closed
};

// Eq. 4: positive key = NN(z2, Q_NN), negatives = Q_NN minus that entry.
// The NN positive is detached; queues hold plain values so no gradient can
// reach them. Below min_nn_pool entries the result is a constant 0.
NnLossResult nn_loss(const Tensor& z1, const Tensor& z2, const EmbeddingQueue& q_nn, double tau,
                     int min_nn_pool);

// The eight per-pair embeddings of the combined objective. *_q tensors come
// from the query encoder (gradient-carrying), *_k from the momentum encoder
// (detached).
struct PairEmbeddings {
    Tensor intra_1q, intra_2k;
    Tensor intra_2q, intra_1k;
    Tensor nn_1q, nn_2k;
    Tensor nn_2q, nn_1k;
};

// Eq. 5 with both terms symmetrized: each term averages its two directions.
LossBreakdown combined_loss(const PairEmbeddings& z, const EmbeddingQueue& q_intra,
                            const EmbeddingQueue& q_nn, const LossWeights& weights, int min_nn_pool);

} // namespace vssl
