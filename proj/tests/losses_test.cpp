#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "vssl/losses.hpp"

using namespace vssl;
using testutil::gradient_check;
using testutil::random_queue_entry;
using testutil::random_unit_tensor;
using testutil::random_unit_vector;

namespace {

Tensor axis_tensor(int dim, int axis, bool requires_grad = false) {
    std::vector<float> v(static_cast<size_t>(dim), 0.0f);
    v[static_cast<size_t>(axis)] = 1.0f;
    return Tensor::from_data({dim}, std::move(v), requires_grad);
}

QueueEntry axis_entry(int dim, int axis) {
    std::vector<float> v(static_cast<size_t>(dim), 0.0f);
    v[static_cast<size_t>(axis)] = 1.0f;
    return {std::move(v), axis, -1};
}

// Direct formula evaluation in extended precision, no max-logit subtraction.
long double info_nce_reference(const std::vector<float>& q, const std::vector<float>& pos,
                               const std::vector<std::vector<float>>& negs, long double tau) {
    const auto dotl = [&](const std::vector<float>& a, const std::vector<float>& b) {
        long double s = 0.0L;
        for (size_t i = 0; i < a.size(); ++i)
            s += static_cast<long double>(a[i]) * static_cast<long double>(b[i]);
        return s;
    };
    const long double lp = dotl(q, pos) / tau;
    long double denom = std::exp(lp);
    for (const auto& n : negs) denom += std::exp(dotl(q, n) / tau);
    return -std::log(std::exp(lp) / denom);
}

EmbeddingQueue filled_queue(int capacity, int count, int dim, Rng& rng, int class_mod = -1) {
    EmbeddingQueue q(capacity);
    std::vector<QueueEntry> batch;
    for (int i = 0; i < count; ++i)
        batch.push_back(random_queue_entry(dim, rng, i, class_mod > 0 ? i % class_mod : -1));
    q.enqueue_batch(batch);
    return q;
}

} // namespace

TEST_CASE("loss weights validation") {
    LossWeights ok;
    ok.validate();
    LossWeights bad_tau = ok;
    bad_tau.temperature = 0.0;
    CHECK_THROWS_AS(bad_tau.validate(), ConfigError);
    LossWeights bad_lambda = ok;
    bad_lambda.lambda_intra = -0.5;
    CHECK_THROWS_AS(bad_lambda.validate(), ConfigError);
    LossWeights both_zero = ok;
    both_zero.lambda_intra = 0.0;
    both_zero.lambda_nn = 0.0;
    CHECK_THROWS_AS(both_zero.validate(), ConfigError);
}

TEST_CASE("info_nce with uniform logits over 3 negatives is ln 4") {
    // q equidistant from the positive and every negative: all similarities 0
    const int dim = 8;
    const Tensor q = axis_tensor(dim, 0);
    const Tensor pos = axis_tensor(dim, 1);
    std::vector<QueueEntry> negs = {axis_entry(dim, 2), axis_entry(dim, 3), axis_entry(dim, 4)};
    const Tensor loss = info_nce(q, pos, negs, 0.1);
    CHECK(loss.item() == doctest::Approx(std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("info_nce with zero negatives is exactly zero") {
    Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor q = random_unit_tensor(16, rng, true);
        const Tensor pos = random_unit_tensor(16, rng);
        const Tensor loss = info_nce(q, pos, {}, 0.1);
        CHECK(loss.item() == 0.0f);
        backward(loss);
        if (q.has_grad())
            for (float g : q.grad()) CHECK(g == 0.0f);
    }
}

TEST_CASE("info_nce rejects non-positive temperature") {
    const Tensor q = axis_tensor(4, 0);
    CHECK_THROWS_AS(info_nce(q, q, {}, 0.0), ConfigError);
    CHECK_THROWS_AS(info_nce(q, q, {}, -1.0), ConfigError);
}

TEST_CASE("info_nce matches the extended-precision oracle on 100 random instances") {
    Rng rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        const int dim = rng.uniform_int(4, 24);
        const int n_negs = rng.uniform_int(0, 8);
        const double tau = rng.uniform(0.05, 1.0);
        const Tensor q = random_unit_tensor(dim, rng);
        const Tensor pos = random_unit_tensor(dim, rng);
        std::vector<QueueEntry> negs;
        std::vector<std::vector<float>> neg_vecs;
        for (int i = 0; i < n_negs; ++i) {
            negs.push_back(random_queue_entry(dim, rng, i));
            neg_vecs.push_back(negs.back().embedding);
        }
        const double got = info_nce(q, pos, negs, tau).item();
        const long double want = info_nce_reference(q.values(), pos.values(), neg_vecs, tau);
        const double denom = std::max<double>(static_cast<double>(want), 1e-12);
        CHECK(std::abs(got - static_cast<double>(want)) / denom <= 1e-6);
    }
}

TEST_CASE("max-subtraction path equals the naive path on well-conditioned inputs") {
    Rng rng(88);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor q = random_unit_tensor(12, rng);
        const Tensor pos = random_unit_tensor(12, rng);
        std::vector<QueueEntry> negs;
        std::vector<std::vector<float>> neg_vecs;
        for (int i = 0; i < 6; ++i) {
            negs.push_back(random_queue_entry(12, rng, i));
            neg_vecs.push_back(negs.back().embedding);
        }
        const double stabilized = info_nce(q, pos, negs, 0.1).item();
        const double naive =
            static_cast<double>(info_nce_reference(q.values(), pos.values(), neg_vecs, 0.1L));
        CHECK(std::abs(stabilized - naive) <= 1e-6 * std::max(1.0, std::abs(naive)));
    }
}

TEST_CASE("info_nce strictly decreases as the positive similarity grows") {
    const int dim = 8;
    std::vector<QueueEntry> negs = {axis_entry(dim, 2), axis_entry(dim, 3), axis_entry(dim, 4)};
    const Tensor q = axis_tensor(dim, 0);
    double previous = std::numeric_limits<double>::infinity();
    for (double alpha = -0.9; alpha <= 0.91; alpha += 0.15) {
        // positive = alpha q + sqrt(1-alpha^2) e1: unit vector with q.pos = alpha
        std::vector<float> pos(static_cast<size_t>(dim), 0.0f);
        pos[0] = static_cast<float>(alpha);
        pos[1] = static_cast<float>(std::sqrt(1.0 - alpha * alpha));
        const double loss = info_nce(q, Tensor::from_data({dim}, pos), negs, 0.1).item();
        CHECK(loss < previous);
        previous = loss;
    }
}

TEST_CASE("info_nce gradient w.r.t. q vs finite differences") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(mix64(1000, seed));
        Tensor q = random_unit_tensor(16, rng, true);
        const Tensor pos = random_unit_tensor(16, rng);
        std::vector<QueueEntry> negs;
        for (int i = 0; i < 8; ++i) negs.push_back(random_queue_entry(16, rng, i));
        const auto result =
            gradient_check({q}, [&] { return info_nce(q, pos, negs, 0.1); }, 1e-3);
        CHECK(result.max_rel_error <= 1e-4);
    }
}

TEST_CASE("intra_loss over an empty queue is zero") {
    Rng rng(9);
    EmbeddingQueue q_intra(8);
    const Tensor z1 = random_unit_tensor(8, rng, true);
    const Tensor z2 = random_unit_tensor(8, rng);
    CHECK(intra_loss(z1, z2, q_intra, 0.1).item() == 0.0f);
}

TEST_CASE("intra_loss golden value: aligned pair against two orthogonal negatives") {
    const int dim = 8;
    const Tensor z = axis_tensor(dim, 0);
    EmbeddingQueue q_intra(4);
    q_intra.enqueue_batch(std::vector<QueueEntry>{axis_entry(dim, 1), axis_entry(dim, 2)});
    const double loss = intra_loss(z, z, q_intra, 0.1).item();
    // -log(e^10 / (e^10 + 2)) = log(1 + 2 e^-10)
    const double expect = std::log1p(2.0 * std::exp(-10.0));
    CHECK(loss == doctest::Approx(expect).epsilon(1e-4));
    CHECK(expect == doctest::Approx(9.08e-5).epsilon(1e-2));
}

TEST_CASE("intra_loss is definitionally info_nce against the materialized queue") {
    Rng rng(10);
    EmbeddingQueue q_intra = filled_queue(32, 20, 8, rng);
    const Tensor z1 = random_unit_tensor(8, rng);
    const Tensor z2 = random_unit_tensor(8, rng);
    std::vector<QueueEntry> materialized;
    for (int i = 0; i < q_intra.size(); ++i) materialized.push_back(q_intra.at(i));
    const float via_queue = intra_loss(z1, z2, q_intra, 0.1).item();
    const float via_entries = info_nce(z1, z2, materialized, 0.1).item();
    CHECK(via_queue == via_entries); // bit-equal
}

TEST_CASE("nn_loss below the min-pool gate returns constant zero with no gradient") {
    Rng rng(11);
    EmbeddingQueue q_nn = filled_queue(64, 10, 8, rng);
    Tensor z1 = random_unit_tensor(8, rng, true);
    const Tensor z2 = random_unit_tensor(8, rng);
    const auto result = nn_loss(z1, z2, q_nn, 0.1, 64);
    CHECK(result.nn_index == -1);
    CHECK(result.loss.item() == 0.0f);
    backward(result.loss);
    CHECK(!z1.has_grad());
}

TEST_CASE("nn_loss with z2 in the pool reduces to intra_loss geometry") {
    const int dim = 8;
    const Tensor z1 = axis_tensor(dim, 0, true);
    const Tensor z2 = axis_tensor(dim, 0);
    EmbeddingQueue q_nn(8);
    q_nn.enqueue_batch(std::vector<QueueEntry>{axis_entry(dim, 0), axis_entry(dim, 1),
                                               axis_entry(dim, 2), axis_entry(dim, 3)});
    const auto result = nn_loss(z1, z2, q_nn, 0.1, 1);
    CHECK(result.nn_index == 0); // z2 itself

    EmbeddingQueue orthogonal_only(8);
    orthogonal_only.enqueue_batch(std::vector<QueueEntry>{axis_entry(dim, 1), axis_entry(dim, 2),
                                                          axis_entry(dim, 3)});
    const float intra = intra_loss(z1, z2, orthogonal_only, 0.1).item();
    CHECK(result.loss.item() == intra);
}

TEST_CASE("nn_loss matches the composed oracle nearest_neighbor -> exclude -> info_nce") {
    Rng rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        EmbeddingQueue q_nn = filled_queue(64, 24, 8, rng);
        const Tensor z1 = random_unit_tensor(8, rng);
        const Tensor z2 = random_unit_tensor(8, rng);
        const auto got = nn_loss(z1, z2, q_nn, 0.1, 1);

        const auto nn = q_nn.nearest_neighbor(z2.values());
        const Tensor pos = Tensor::from_data({8}, nn.entry->embedding);
        const auto negs = q_nn.negatives_excluding(nn.index);
        const float want = info_nce(z1, pos, negs, 0.1).item();
        CHECK(got.nn_index == nn.index);
        CHECK(got.loss.item() == want);
    }
}

TEST_CASE("nn_loss leaves the queue untouched and gradient-free") {
    Rng rng(13);
    EmbeddingQueue q_nn = filled_queue(32, 16, 8, rng);
    std::vector<std::vector<float>> before;
    for (int i = 0; i < q_nn.size(); ++i) before.push_back(q_nn.at(i).embedding);

    Tensor z1 = random_unit_tensor(8, rng, true);
    const Tensor z2 = random_unit_tensor(8, rng);
    const auto result = nn_loss(z1, z2, q_nn, 0.1, 1);
    backward(result.loss);
    CHECK(z1.has_grad());
    for (int i = 0; i < q_nn.size(); ++i) CHECK(q_nn.at(i).embedding == before[static_cast<size_t>(i)]);
}

namespace {

struct CombinedFixture {
    EmbeddingQueue q_intra{64};
    EmbeddingQueue q_nn{64};
    PairEmbeddings z;

    explicit CombinedFixture(uint64_t seed, bool symmetric_inputs = false) {
        Rng rng(seed);
        std::vector<QueueEntry> batch;
        for (int i = 0; i < 24; ++i) batch.push_back(random_queue_entry(8, rng, i, i % 4));
        q_intra.enqueue_batch(batch);
        std::vector<QueueEntry> batch2;
        for (int i = 0; i < 24; ++i) batch2.push_back(random_queue_entry(8, rng, 100 + i, i % 4));
        q_nn.enqueue_batch(batch2);

        z.intra_1q = random_unit_tensor(8, rng, true);
        z.intra_2k = random_unit_tensor(8, rng);
        z.intra_2q = symmetric_inputs ? z.intra_1q : random_unit_tensor(8, rng, true);
        z.intra_1k = symmetric_inputs ? z.intra_2k : random_unit_tensor(8, rng);
        z.nn_1q = random_unit_tensor(8, rng, true);
        z.nn_2k = random_unit_tensor(8, rng);
        z.nn_2q = symmetric_inputs ? z.nn_1q : random_unit_tensor(8, rng, true);
        z.nn_1k = symmetric_inputs ? z.nn_2k : random_unit_tensor(8, rng);
    }
};

} // namespace

TEST_CASE("combined loss: lambda_nn = 0 reduces to the pure intra objective") {
    CombinedFixture f(21);
    LossWeights w;
    w.lambda_intra = 1.0;
    w.lambda_nn = 0.0;
    const auto breakdown = combined_loss(f.z, f.q_intra, f.q_nn, w, 1);
    CHECK(breakdown.total_value == breakdown.intra_term); // exact
    CHECK(breakdown.nn_term != 0.0);                      // still reported, just unweighted
}

TEST_CASE("combined loss: lambda_intra = 0 is the pure NN objective") {
    CombinedFixture f(22);
    LossWeights w;
    w.lambda_intra = 0.0;
    w.lambda_nn = 1.0;
    const auto breakdown = combined_loss(f.z, f.q_intra, f.q_nn, w, 1);
    CHECK(breakdown.total_value == breakdown.nn_term);
}

TEST_CASE("combined loss: symmetric inputs give equal directional subtotals") {
    CombinedFixture f(23, /*symmetric_inputs=*/true);
    LossWeights w;
    const auto breakdown = combined_loss(f.z, f.q_intra, f.q_nn, w, 1);
    CHECK(std::abs(breakdown.intra_fwd - breakdown.intra_bwd) <= 1e-6);
    CHECK(std::abs(breakdown.nn_fwd - breakdown.nn_bwd) <= 1e-6);
}

TEST_CASE("combined loss is linear in the lambda weights") {
    CombinedFixture f(24);
    for (const auto [li, ln] : {std::pair{1.0, 1.0}, {0.3, 2.0}, {2.5, 0.0}, {0.0, 0.7}}) {
        LossWeights w;
        w.lambda_intra = li;
        w.lambda_nn = ln;
        const auto b = combined_loss(f.z, f.q_intra, f.q_nn, w, 1);
        CHECK(std::abs(b.total_value - (li * b.intra_term + ln * b.nn_term)) <= 1e-6);
    }
}

TEST_CASE("combined loss gradient vs finite differences") {
    // deep composite: the 1e-3 budget applies
    CombinedFixture f(25);
    LossWeights w;
    const auto result = gradient_check(
        {f.z.intra_1q, f.z.intra_2q, f.z.nn_1q, f.z.nn_2q},
        [&] { return combined_loss(f.z, f.q_intra, f.q_nn, w, 1).total; }, 1e-3);
    CHECK(result.max_rel_error <= 1e-3);
}
