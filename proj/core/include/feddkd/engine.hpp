#pragma once

#include <functional>
#include <optional>
#include <string>

#include "feddkd/config.hpp"
#include "feddkd/fed.hpp"

namespace feddkd {

/// Datasets of one experiment after splitting: the training pool (validation
/// already carved out), the validation and test sets, and the per-client
/// shards partitioned from the pool.
struct PreparedData {
    Dataset train;
    Dataset validation;  // empty labels when validation_fraction == 0
    Dataset test;
    std::vector<ClientShard> shards;

    bool has_validation() const { return !validation.labels.empty(); }
};

PreparedData prepare_data(const ExperimentConfig& cfg);

/// Deterministic per-(seed, client, round) stream seeds; exposed so tests can
/// replay the engine's exact randomness.
std::uint64_t local_train_stream_seed(std::uint64_t master_seed, int client_id, int round);
std::uint64_t dkd_stream_seed(std::uint64_t master_seed, int client_id, int round);

struct RunResult {
    ServerState server;
    std::vector<ClientState> clients;
    ParamSet best_params;
    int best_round = 0;  // 1-based; 0 when no round ran
    double best_val_accuracy = 0.0;
    double best_test_accuracy = 0.0;
    long long total_train_steps = 0;  // raw step total over all clients and rounds
    DkdDiagnostics dkd_diagnostics;
    bool small_batch_warning = false;
    std::optional<std::string> abort_reason;  // set when a round failed mid-run
};

using RoundCallback = std::function<void(const RoundRecord&)>;

/// Runs the configured algorithm end to end: per round, sample clients,
/// broadcast the global model, train locally in parallel, refine by DKD (or
/// plain averaging when J = 0), then evaluate and account. Deterministic for a
/// given master seed, independent of the worker count. On a mid-run failure
/// the partial history is returned with abort_reason set. `on_round`, when
/// given, fires after every completed round.
RunResult run_federated(const ExperimentConfig& cfg, int workers = 1,
                        const RoundCallback& on_round = {});

}  // namespace feddkd
