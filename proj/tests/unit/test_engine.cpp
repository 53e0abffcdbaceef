#include <cmath>

#include <doctest.h>

#include "feddkd/engine.hpp"
#include "helpers.hpp"

using namespace feddkd;

namespace {

/// Small, fast experiment on separable blobs; callers tweak fields.
ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.algorithm = Algorithm::FedAvg;
    cfg.seed = 5;
    cfg.clients = 4;
    cfg.client_fraction = 1.0;
    cfg.rounds = 3;
    cfg.local_epochs = 1;
    cfg.batch_size = 16;
    cfg.validation_fraction = 0.1;
    cfg.optimizer.type = OptimizerConfig::Type::Sgd;
    cfg.optimizer.lr0 = 0.05;
    cfg.optimizer.lr_round_decay = 0.98;
    cfg.optimizer.momentum = 0.9;
    cfg.dkd.steps = 2;
    cfg.dkd.lr0 = 0.1;
    cfg.dkd.round_decay = 0.99;
    cfg.dkd.batch_size = 16;
    cfg.model = ModelSpec{{LayerSpec::dense(6, 12), LayerSpec::relu(), LayerSpec::dense(12, 4)}};
    cfg.data.classes = 4;
    cfg.data.dim = 6;
    cfg.data.per_class = 60;
    cfg.data.spread = 1.0;
    cfg.data.test_per_class = 30;
    cfg.data.data_seed = 3;
    cfg.data.partition.scheme = PartitionSpec::Scheme::Dirichlet;
    cfg.data.partition.alpha = 0.5;
    return cfg;
}

bool histories_equal(const std::vector<RoundRecord>& a, const std::vector<RoundRecord>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const RoundRecord &x = a[i], &y = b[i];
        if (x.round != y.round || x.comm_rounds_cum != y.comm_rounds_cum ||
            x.train_steps_cum != y.train_steps_cum || x.dkd_steps_cum != y.dkd_steps_cum ||
            x.train_loss != y.train_loss || x.val_accuracy != y.val_accuracy ||
            x.test_accuracy != y.test_accuracy || x.wall_seconds != y.wall_seconds)
            return false;
    }
    return true;
}

}  // namespace

TEST_SUITE_BEGIN("engine");

TEST_CASE("zero rounds return the initial network and no history") {
    ExperimentConfig cfg = small_config();
    cfg.rounds = 0;
    const RunResult r = run_federated(cfg);
    CHECK(r.server.history.empty());
    CHECK(r.server.global_params == init_network(cfg.model, cfg.seed));
    CHECK(r.best_round == 0);
}

TEST_CASE("single client with full participation is centralized training") {
    ExperimentConfig cfg = small_config();
    cfg.algorithm = Algorithm::FedAvg;
    cfg.clients = 1;
    cfg.rounds = 3;
    cfg.validation_fraction = 0.0;
    const RunResult fed = run_federated(cfg);

    // Replay: same data pipeline, same streams, plain sequential training.
    PreparedData data = prepare_data(cfg);
    REQUIRE(data.shards.size() == 1);
    ClientState central;
    central.client_id = 0;
    central.shard = data.shards[0];
    ParamSet global = init_network(cfg.model, cfg.seed);
    for (int t = 0; t < cfg.rounds; ++t) {
        LocalTrainOptions opts;
        opts.epochs = cfg.local_epochs;
        opts.batch_size = cfg.batch_size;
        opts.lr = cfg.optimizer.lr_at_round(t);
        opts.optimizer = cfg.optimizer;
        Rng stream(local_train_stream_seed(cfg.seed, 0, t));
        local_train(central, global, opts, stream);
        global = weighted_average({central.params}, {1.0}, false);
    }
    CHECK(fed.server.global_params == global);
}

TEST_CASE("dkd with zero steps is bitwise fedavg") {
    ExperimentConfig avg = small_config();
    avg.algorithm = Algorithm::FedAvg;
    ExperimentConfig dkd = small_config();
    dkd.algorithm = Algorithm::FedDkd;
    dkd.dkd.steps = 0;

    const RunResult a = run_federated(avg);
    const RunResult b = run_federated(dkd);
    CHECK(histories_equal(a.server.history, b.server.history));
    CHECK(a.server.global_params == b.server.global_params);
}

TEST_CASE("prox and max at zero strength reproduce fedavg bitwise") {
    ExperimentConfig avg = small_config();
    ExperimentConfig prox = small_config();
    prox.algorithm = Algorithm::FedProx;
    prox.prox_mu = 0.0;
    ExperimentConfig maxed = small_config();
    maxed.algorithm = Algorithm::FedMax;
    maxed.max_beta = 0.0;

    const RunResult a = run_federated(avg);
    const RunResult p = run_federated(prox);
    const RunResult m = run_federated(maxed);
    CHECK(histories_equal(a.server.history, p.server.history));
    CHECK(histories_equal(a.server.history, m.server.history));
    CHECK(a.server.global_params == p.server.global_params);
    CHECK(a.server.global_params == m.server.global_params);

    // Nonzero strengths actually change the run.
    prox.prox_mu = 1.0;
    CHECK_FALSE(histories_equal(a.server.history, run_federated(prox).server.history));
}

TEST_CASE("runs are deterministic and worker-count independent") {
    ExperimentConfig cfg = small_config();
    cfg.algorithm = Algorithm::FedDkd;
    const RunResult one = run_federated(cfg, 1);
    const RunResult again = run_federated(cfg, 1);
    const RunResult threaded = run_federated(cfg, 3);
    CHECK(histories_equal(one.server.history, again.server.history));
    CHECK(histories_equal(one.server.history, threaded.server.history));
    CHECK(one.server.global_params == threaded.server.global_params);
    CHECK(one.best_round == threaded.best_round);
    CHECK(one.total_train_steps == threaded.total_train_steps);
}

TEST_CASE("different seeds give different runs") {
    ExperimentConfig cfg = small_config();
    ExperimentConfig other = cfg;
    other.seed = cfg.seed + 1;
    CHECK_FALSE(histories_equal(run_federated(cfg).server.history,
                                run_federated(other).server.history));
}

TEST_CASE("communication accounting is exact") {
    ExperimentConfig cfg = small_config();
    cfg.algorithm = Algorithm::FedDkd;
    cfg.rounds = 5;
    cfg.dkd.steps = 2;
    const RunResult r = run_federated(cfg);
    REQUIRE(r.server.history.size() == 5);
    CHECK(r.server.history.back().comm_rounds_cum == 5 * 3);
    CHECK(r.server.history.back().dkd_steps_cum == 10);

    cfg.dkd.warmup_rounds = 2;  // rounds 1..2 cost 1 comm, rounds 3..5 cost 3
    const RunResult w = run_federated(cfg);
    CHECK(w.server.history.back().comm_rounds_cum == 2 * 1 + 3 * 3);
    CHECK(w.server.history.back().dkd_steps_cum == 6);
}

TEST_CASE("per-client bn tensors stay with their owners") {
    ExperimentConfig cfg = small_config();
    cfg.algorithm = Algorithm::FedDkdBn;
    cfg.model = ModelSpec{{LayerSpec::dense(6, 12), LayerSpec::batch_norm(12), LayerSpec::relu(),
                           LayerSpec::dense(12, 4)}};
    cfg.rounds = 4;
    cfg.client_fraction = 0.5;
    const RunResult r = run_federated(cfg);
    REQUIRE_FALSE(r.abort_reason.has_value());
    CHECK(r.dkd_diagnostics.max_abs_bn_grad == 0.0);
    int trained = 0;
    for (const ClientState& c : r.clients) {
        if (!c.trained_once) continue;
        ++trained;
        CHECK(c.params.bn_tensors() == c.bn_after_local);
    }
    CHECK(trained >= 2);

    // Clients' BN tensors diverge from the server copy (never broadcast back).
    bool any_differs = false;
    for (const ClientState& c : r.clients) {
        if (!c.trained_once) continue;
        if (c.params.bn_tensors() != r.server.global_params.bn_tensors()) any_differs = true;
    }
    CHECK(any_differs);
}

TEST_CASE("feddkd_bn keeps non-bn parameters shared") {
    ExperimentConfig cfg = small_config();
    cfg.algorithm = Algorithm::FedDkdBn;
    cfg.model = ModelSpec{{LayerSpec::dense(6, 12), LayerSpec::batch_norm(12), LayerSpec::relu(),
                           LayerSpec::dense(12, 4)}};
    const RunResult r = run_federated(cfg);
    REQUIRE_FALSE(r.abort_reason.has_value());
    CHECK(r.server.global_params.all_finite());
}

TEST_CASE("divergence aborts the run but keeps the partial history") {
    ExperimentConfig cfg = small_config();
    cfg.model = ModelSpec{{LayerSpec::dense(6, 12), LayerSpec::batch_norm(12), LayerSpec::relu(),
                           LayerSpec::dense(12, 4)}};
    cfg.rounds = 4;
    cfg.optimizer.lr0 = 1e-3;
    cfg.optimizer.lr_round_decay = 1e120;  // round 0 fine, round 1 explodes
    const RunResult r = run_federated(cfg);
    REQUIRE(r.abort_reason.has_value());
    CHECK(r.server.history.size() == 1);
    CHECK(r.server.history.back().round == 1);
}

TEST_CASE("training actually learns the blobs") {
    ExperimentConfig cfg = small_config();
    cfg.rounds = 8;
    const RunResult r = run_federated(cfg);
    REQUIRE_FALSE(r.abort_reason.has_value());
    CHECK(r.server.history.back().test_accuracy > 0.7);
    CHECK(r.best_val_accuracy >= r.server.history.front().val_accuracy);
}

TEST_CASE("multi-source experiments run end to end") {
    ExperimentConfig cfg = small_config();
    cfg.clients = 3;
    cfg.data.partition.scheme = PartitionSpec::Scheme::MultiSource;
    cfg.data.partition.sources = 3;
    cfg.data.per_class = 40;
    cfg.algorithm = Algorithm::FedDkdBn;
    cfg.model = ModelSpec{{LayerSpec::dense(6, 12), LayerSpec::batch_norm(12), LayerSpec::relu(),
                           LayerSpec::dense(12, 4)}};
    const RunResult r = run_federated(cfg);
    REQUIRE_FALSE(r.abort_reason.has_value());
    CHECK(r.clients.size() == 3);
    REQUIRE(r.server.history.size() == 3);
    // Every client holds one whole source.
    PreparedData data = prepare_data(cfg);
    for (int k = 0; k < 3; ++k)
        CHECK(r.clients[k].shard.sample_count() == data.shards[k].sample_count());
}

TEST_CASE("best-on-validation tracking picks the argmax round") {
    ExperimentConfig cfg = small_config();
    cfg.rounds = 6;
    const RunResult r = run_federated(cfg);
    REQUIRE_FALSE(r.abort_reason.has_value());
    double best = -1.0;
    int best_round = 0;
    for (const RoundRecord& rec : r.server.history) {
        if (rec.val_accuracy > best) {
            best = rec.val_accuracy;
            best_round = rec.round;
        }
    }
    CHECK(r.best_val_accuracy == best);
    CHECK(r.best_round == best_round);
    CHECK(r.best_test_accuracy == r.server.history[best_round - 1].test_accuracy);
}

TEST_SUITE_END();
