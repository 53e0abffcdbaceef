#include <benchmark/benchmark.h>

#include "feddkd/divergence.hpp"
#include "feddkd/engine.hpp"
#include "feddkd/fed.hpp"

namespace {

using namespace feddkd;

Tensor random_logits(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t({rows, cols});
    for (double& v : t.data()) v = 2.0 * rng.normal();
    return t;
}

void BM_Softmax(benchmark::State& state) {
    const Tensor logits = random_logits(state.range(0), 10, 1);
    for (auto _ : state) {
        Tensor p = softmax(logits);
        benchmark::DoNotOptimize(p.data().data());
    }
}
BENCHMARK(BM_Softmax)->Range(8, 2048);

void BM_SoftCrossEntropy(benchmark::State& state) {
    const Tensor teacher = random_logits(state.range(0), 10, 2);
    const Tensor student = random_logits(state.range(0), 10, 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(soft_cross_entropy(teacher, student));
    }
}
BENCHMARK(BM_SoftCrossEntropy)->Range(8, 2048);

const ModelSpec kBenchModel{{LayerSpec::dense(20, 64), LayerSpec::batch_norm(64),
                             LayerSpec::relu(), LayerSpec::dense(64, 10)}};

void BM_ForwardBackward(benchmark::State& state) {
    ParamSet params = init_network(kBenchModel, 7);
    const Tensor batch = random_logits(state.range(0), 20, 4);
    const Tensor teacher = random_logits(state.range(0), 10, 5);
    for (auto _ : state) {
        ForwardResult fwd = forward(params, batch, Mode::Train);
        ParamSet grads =
            backward(params, fwd.cache, soft_cross_entropy_grad(teacher, fwd.logits));
        benchmark::DoNotOptimize(grads.layers.data());
    }
}
BENCHMARK(BM_ForwardBackward)->Range(8, 256);

void BM_DirichletPartition(benchmark::State& state) {
    const Dataset ds = generate_synthetic(10, 20, state.range(0), 1.0, nullptr, 6);
    for (auto _ : state) {
        auto shards = partition_dirichlet(ds, 8, 0.5, 11);
        benchmark::DoNotOptimize(shards.data());
    }
}
BENCHMARK(BM_DirichletPartition)->Range(64, 1024);

void BM_DkdGradient(benchmark::State& state) {
    Rng rng(8);
    ClientShard shard;
    shard.data = generate_synthetic(10, 20, 100, 1.0, nullptr, 9);
    ParamSet teacher = init_network(kBenchModel, 10);
    ParamSet student = init_network(kBenchModel, 11);
    for (auto _ : state) {
        ParamSet g = dkd_gradient(teacher, student, shard, state.range(0), rng, BnMode::Shared);
        benchmark::DoNotOptimize(g.layers.data());
    }
}
BENCHMARK(BM_DkdGradient)->Range(16, 256);

void BM_FederatedRound(benchmark::State& state) {
    ExperimentConfig cfg;
    cfg.algorithm = Algorithm::FedDkd;
    cfg.clients = 4;
    cfg.rounds = 1;
    cfg.local_epochs = 1;
    cfg.batch_size = 32;
    cfg.optimizer.lr0 = 0.05;
    cfg.dkd.steps = 3;
    cfg.dkd.lr0 = 0.1;
    cfg.dkd.batch_size = 32;
    cfg.model = ModelSpec{{LayerSpec::dense(20, 32), LayerSpec::relu(), LayerSpec::dense(32, 10)}};
    cfg.data.classes = 10;
    cfg.data.dim = 20;
    cfg.data.per_class = 100;
    cfg.data.test_per_class = 20;
    cfg.data.partition.alpha = 0.5;
    const int workers = static_cast<int>(state.range(0));
    for (auto _ : state) {
        RunResult r = run_federated(cfg, workers);
        benchmark::DoNotOptimize(r.server.history.data());
    }
}
BENCHMARK(BM_FederatedRound)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
