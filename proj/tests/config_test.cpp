#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "vssl/config.hpp"

using namespace vssl;

TEST_CASE("defaults validate and round-trip through the canonical text") {
    TrainConfig cfg;
    cfg.validate();
    const TrainConfig parsed = TrainConfig::from_text(cfg.canonical_text());
    CHECK(parsed.canonical_text() == cfg.canonical_text());
    CHECK(parsed.hash() == cfg.hash());
}

TEST_CASE("key = value parsing with comments and whitespace") {
    const TrainConfig cfg = TrainConfig::from_text(
        "# a comment line\n"
        "epochs = 3\n"
        "  batch_size=4   # trailing comment\n"
        "\n"
        "n_videos = 32\n"
        "warmup_epochs = 1\n"
        "lambda_nn = 0.5\n"
        "conv_channels = 4, 8\n"
        "mode = non_momentum\n");
    CHECK(cfg.epochs == 3);
    CHECK(cfg.batch_size == 4);
    CHECK(cfg.n_videos == 32);
    CHECK(cfg.lambda_nn == 0.5);
    CHECK(cfg.conv_channels == std::vector<int>{4, 8});
    CHECK(cfg.mode == TrainerMode::non_momentum);
}

TEST_CASE("unknown keys are errors") {
    CHECK_THROWS_AS(TrainConfig::from_text("learning_rate = 0.1\n"), ConfigError);
}

TEST_CASE("malformed lines and values are errors") {
    CHECK_THROWS_AS(TrainConfig::from_text("epochs 3\n"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_text("epochs = three\n"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_text("epochs =\n"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_text("base_lr = 0.1x\n"), ConfigError);
}

TEST_CASE("semantic validation") {
    CHECK_THROWS_AS(TrainConfig::from_text("warmup_epochs = 30\n"), ConfigError); // not < epochs
    CHECK_THROWS_AS(TrainConfig::from_text("temperature = 0\n"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_text("lambda_intra = 0\nlambda_nn = 0\n"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_text("momentum_init = 1.0\n"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_text("min_nn_pool = 1024\n"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_text("n_videos = 321\n"), ConfigError); // not divisible
    CHECK_THROWS_AS(TrainConfig::from_text("batch_size = 512\n"), ConfigError); // > n_videos
    CHECK_THROWS_AS(TrainConfig::from_text("test_fraction = 1.5\n"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_text("retrieval_ks = 5,5\n"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_text("fewshot_fractions = 0.5,1.5\n"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_text("mode = magic\n"), ConfigError);
}

TEST_CASE("missing config file is a config error") {
    CHECK_THROWS_AS(TrainConfig::from_file("/nonexistent/config.txt"), ConfigError);
}

TEST_CASE("config hash tracks content") {
    TrainConfig a, b;
    b.base_lr = 0.06;
    CHECK(a.hash() != b.hash());
}

TEST_CASE("derived configs are consistent") {
    TrainConfig cfg;
    CHECK(cfg.steps_per_epoch() == 10);
    CHECK(cfg.total_steps() == 300);
    CHECK(cfg.encoder_config().backbone_dim() == 32);
    CHECK(cfg.data_config().n_videos == 320);
    CHECK(cfg.loss_weights().temperature == 0.1);
}
