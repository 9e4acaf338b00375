#include <benchmark/benchmark.h>

#include "vssl/config.hpp"
#include "vssl/data.hpp"
#include "vssl/encoder.hpp"
#include "vssl/queue.hpp"
#include "vssl/rng.hpp"
#include "vssl/tensor.hpp"
#include "vssl/trainer.hpp"

namespace {

vssl::Tensor random_tensor(std::vector<int> shape, uint64_t seed, bool requires_grad = false) {
    vssl::Rng rng(seed);
    vssl::Tensor t = vssl::Tensor::zeros(std::move(shape), requires_grad);
    for (auto& v : t.raw_data()) v = static_cast<float>(rng.normal());
    return t;
}

void BM_Matmul(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const auto a = random_tensor({n, n}, 1);
    const auto b = random_tensor({n, n}, 2);
    for (auto _ : state) benchmark::DoNotOptimize(vssl::matmul(a, b));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(128);

void BM_Conv3dForward(benchmark::State& state) {
    const auto input = random_tensor({1, 4, 16, 16}, 3);
    const auto kernels = random_tensor({8, 1, 3, 3, 3}, 4);
    for (auto _ : state)
        benchmark::DoNotOptimize(vssl::conv3d(input, kernels, {1, 2, 2}, {1, 1, 1}));
}
BENCHMARK(BM_Conv3dForward);

void BM_Conv3dBackward(benchmark::State& state) {
    for (auto _ : state) {
        state.PauseTiming();
        auto input = random_tensor({1, 4, 16, 16}, 3, true);
        auto kernels = random_tensor({8, 1, 3, 3, 3}, 4, true);
        auto out = vssl::conv3d(input, kernels, {1, 2, 2}, {1, 1, 1});
        auto loss = vssl::sum(out);
        state.ResumeTiming();
        vssl::backward(loss);
    }
}
BENCHMARK(BM_Conv3dBackward);

void BM_EncoderEmbed(benchmark::State& state) {
    vssl::EncoderConfig cfg;
    vssl::EncoderPair pair(cfg, 42);
    const auto clip = random_tensor({1, 4, 16, 16}, 5);
    for (auto _ : state)
        benchmark::DoNotOptimize(pair.embed(clip, vssl::Branch::intra, vssl::Side::key));
}
BENCHMARK(BM_EncoderEmbed);

void BM_QueueNearestNeighbor(benchmark::State& state) {
    const int capacity = static_cast<int>(state.range(0));
    vssl::EmbeddingQueue queue(capacity);
    vssl::Rng rng(7);
    std::vector<vssl::QueueEntry> batch;
    for (int i = 0; i < capacity; ++i) {
        std::vector<float> v(16);
        double sq = 0.0;
        for (auto& x : v) {
            x = static_cast<float>(rng.normal());
            sq += static_cast<double>(x) * x;
        }
        const double inv = 1.0 / std::sqrt(sq);
        for (auto& x : v) x = static_cast<float>(x * inv);
        batch.push_back({std::move(v), i, 0});
        if (batch.size() == 64) {
            queue.enqueue_batch(batch);
            batch.clear();
        }
    }
    if (!batch.empty()) queue.enqueue_batch(batch);
    const auto query = batch.empty() ? queue.at(0).embedding : batch.front().embedding;
    for (auto _ : state) benchmark::DoNotOptimize(queue.nearest_neighbor(queue.at(0).embedding));
}
BENCHMARK(BM_QueueNearestNeighbor)->Arg(512)->Arg(4096);

void BM_Augment(benchmark::State& state) {
    vssl::DataConfig cfg;
    const auto video = vssl::generate_video(cfg, 0);
    vssl::Rng rng(11);
    for (auto _ : state) benchmark::DoNotOptimize(vssl::augment(video, 4, rng, cfg));
}
BENCHMARK(BM_Augment);

void BM_TrainStep(benchmark::State& state) {
    vssl::TrainConfig cfg;
    cfg.n_videos = 32;
    cfg.n_classes = 16;
    cfg.batch_size = 8;
    cfg.epochs = 1000000;
    cfg.warmup_epochs = 1;
    cfg.queue_capacity = 64;
    cfg.min_nn_pool = 16;
    vssl::Trainer trainer(cfg);
    for (auto _ : state) benchmark::DoNotOptimize(trainer.train_step());
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
