#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "vssl/encoder.hpp"

using namespace vssl;
using testutil::random_tensor;

namespace {

Tensor random_clip(const EncoderConfig& cfg, uint64_t seed) {
    Rng rng(seed);
    Tensor clip = Tensor::zeros({cfg.in_channels, cfg.clip_len, cfg.clip_height, cfg.clip_width});
    for (auto& v : clip.raw_data()) v = static_cast<float>(rng.uniform());
    return clip;
}

double param_distance(const EncoderPair& pair) {
    const auto q = pair.query_parameters();
    const auto k = pair.key_parameters();
    double sq = 0.0;
    for (size_t i = 0; i < q.size(); ++i) {
        const auto& qa = q[i].tensor.values();
        const auto& ka = k[i].tensor.values();
        for (size_t j = 0; j < qa.size(); ++j) {
            const double d = static_cast<double>(ka[j]) - qa[j];
            sq += d * d;
        }
    }
    return std::sqrt(sq);
}

} // namespace

TEST_CASE("embeddings are unit length on every branch and side") {
    EncoderConfig cfg;
    EncoderPair pair(cfg, 7);
    const Tensor clip = random_clip(cfg, 1);
    for (const Branch b : {Branch::intra, Branch::nn})
        for (const Side s : {Side::query, Side::key}) {
            const Tensor z = pair.embed(clip, b, s);
            REQUIRE(z.shape() == std::vector<int>{cfg.embed_dim});
            double sq = 0.0;
            for (float v : z.values()) sq += static_cast<double>(v) * v;
            CHECK(std::abs(std::sqrt(sq) - 1.0) <= 1e-5);
        }
}

TEST_CASE("key side carries no gradient tape; query side does") {
    EncoderConfig cfg;
    EncoderPair pair(cfg, 8);
    const Tensor clip = random_clip(cfg, 2);
    CHECK(!pair.embed(clip, Branch::intra, Side::key).requires_grad());
    CHECK(pair.embed(clip, Branch::intra, Side::query).requires_grad());
}

TEST_CASE("forcing key weights to query weights aligns the embeddings") {
    EncoderConfig cfg;
    EncoderPair pair(cfg, 9);
    // perturb key weights, then force the copy
    pair.momentum_update(0.5);
    pair.copy_query_to_key();
    const Tensor clip = random_clip(cfg, 3);
    for (const Branch b : {Branch::intra, Branch::nn}) {
        const auto zq = pair.embed(clip, b, Side::query).values();
        const auto zk = pair.embed(clip, b, Side::key).values();
        for (size_t i = 0; i < zq.size(); ++i) CHECK(std::abs(zq[i] - zk[i]) <= 1e-6);
    }
}

TEST_CASE("embed rejects wrong clip shapes") {
    EncoderConfig cfg;
    EncoderPair pair(cfg, 10);
    CHECK_THROWS_AS(pair.embed(Tensor::zeros({1, 4, 8, 8}), Branch::intra, Side::query),
                    DimensionError);
    CHECK_THROWS_AS(pair.embed(Tensor::zeros({1, 4, 16}), Branch::intra, Side::query),
                    DimensionError);
}

TEST_CASE("encoder config validation") {
    EncoderConfig ok;
    ok.validate();
    // padding 1 with 3x3x3 kernels saturates spatial dims at 1, so any
    // positive clip survives; the error paths are non-positive fields
    EncoderConfig bad_clip;
    bad_clip.clip_len = 0;
    CHECK_THROWS_AS(bad_clip.validate(), ConfigError);
    EncoderConfig bad_channels;
    bad_channels.conv_channels = {};
    CHECK_THROWS_AS(bad_channels.validate(), ConfigError);
    EncoderConfig bad_head;
    bad_head.embed_dim = 0;
    CHECK_THROWS_AS(bad_head.validate(), ConfigError);
}

TEST_CASE("momentum update boundary cases") {
    EncoderConfig cfg;
    EncoderPair pair(cfg, 11);
    // decouple the twins first
    {
        auto params = pair.query_parameters();
        auto& w = params[0].tensor.raw_data();
        for (auto& v : w) v += 0.25f;
    }
    const auto snapshot = [&](const std::vector<NamedTensor>& params) {
        std::vector<std::vector<float>> s;
        for (const auto& p : params) s.push_back(p.tensor.values());
        return s;
    };

    const auto key_before = snapshot(pair.key_parameters());
    pair.momentum_update(1.0); // m = 1: key unchanged
    CHECK(snapshot(pair.key_parameters()) == key_before);

    pair.momentum_update(0.0); // m = 0: key equals query
    CHECK(snapshot(pair.key_parameters()) == snapshot(pair.query_parameters()));

    CHECK_THROWS_AS(pair.momentum_update(-0.1), ConfigError);
    CHECK_THROWS_AS(pair.momentum_update(1.1), ConfigError);
}

TEST_CASE("momentum update: m = 0.994 moves a zero key weight to 0.006") {
    EncoderConfig cfg;
    EncoderPair pair(cfg, 12);
    auto q = pair.query_parameters();
    auto k = pair.key_parameters();
    q[0].tensor.raw_data()[0] = 1.0f;
    k[0].tensor.raw_data()[0] = 0.0f;
    pair.momentum_update(0.994);
    CHECK(pair.key_parameters()[0].tensor.values()[0] == doctest::Approx(0.006).epsilon(1e-9));
}

TEST_CASE("EMA contraction: distance shrinks by exactly m^n") {
    EncoderConfig cfg;
    EncoderPair pair(cfg, 13);
    // push the key weights away from the query weights
    {
        auto k = pair.key_parameters();
        Rng rng(99);
        for (auto& p : k)
            for (auto& v : p.tensor.raw_data()) v += static_cast<float>(rng.normal() * 0.05);
    }
    const double d0 = param_distance(pair);
    REQUIRE(d0 > 0.0);
    const double m = 0.9;
    const int n = 10;
    for (int i = 0; i < n; ++i) pair.momentum_update(m);
    const double dn = param_distance(pair);
    const double expect = d0 * std::pow(m, n);
    CHECK(std::abs(dn - expect) / expect <= 1e-5);
}

TEST_CASE("anneal_momentum boundaries and midpoint") {
    CHECK(anneal_momentum(0.0, 0.994) == doctest::Approx(0.994).epsilon(1e-12));
    CHECK(anneal_momentum(1.0, 0.994) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(anneal_momentum(0.5, 0.994) == doctest::Approx(0.997).epsilon(1e-9));
    CHECK_THROWS_AS(anneal_momentum(-0.01, 0.994), ContractError);
    CHECK_THROWS_AS(anneal_momentum(1.01, 0.994), ContractError);
}

TEST_CASE("He initialization: empirical conv weight variance near 2/fan_in") {
    // 32 output channels x 16 input channels x 27 taps = 13824 samples
    EncoderConfig cfg;
    EncoderPair pair(cfg, 4242);
    const auto params = pair.query_parameters();
    const Tensor* conv2 = nullptr;
    for (const auto& p : params)
        if (p.name == "query.conv2.weight") conv2 = &p.tensor;
    REQUIRE(conv2 != nullptr);
    REQUIRE(conv2->numel() >= 10000);
    const int fan_in = 16 * 27;
    double mean = 0.0, var = 0.0;
    for (float v : conv2->values()) mean += v;
    mean /= static_cast<double>(conv2->numel());
    for (float v : conv2->values()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(conv2->numel());
    const double expect = 2.0 / fan_in;
    CHECK(std::abs(var - expect) / expect <= 0.2);
}

TEST_CASE("the two projection heads never share weights") {
    EncoderConfig cfg;
    EncoderPair pair(cfg, 14);
    const auto params = pair.query_parameters();
    const Tensor *intra_w1 = nullptr, *nn_w1 = nullptr;
    for (const auto& p : params) {
        if (p.name == "query.head_intra.w1") intra_w1 = &p.tensor;
        if (p.name == "query.head_nn.w1") nn_w1 = &p.tensor;
    }
    REQUIRE(intra_w1 != nullptr);
    REQUIRE(nn_w1 != nullptr);
    CHECK(intra_w1->values() != nn_w1->values());

    // and their outputs differ for the same backbone features
    const Tensor clip = random_clip(cfg, 15);
    const auto z_intra = pair.embed(clip, Branch::intra, Side::query).values();
    const auto z_nn = pair.embed(clip, Branch::nn, Side::query).values();
    CHECK(z_intra != z_nn);
}

TEST_CASE("embedding is deterministic for a fixed seed and clip") {
    EncoderConfig cfg;
    EncoderPair a(cfg, 1234), b(cfg, 1234);
    const Tensor clip = random_clip(cfg, 77);
    CHECK(a.embed(clip, Branch::intra, Side::query).values() ==
          b.embed(clip, Branch::intra, Side::query).values());
    CHECK(a.embed(clip, Branch::nn, Side::key).values() ==
          b.embed(clip, Branch::nn, Side::key).values());
}
