#pragma once

#include <cstdint>
#include <vector>

#include "feddkd/data.hpp"
#include "feddkd/metrics.hpp"
#include "feddkd/model.hpp"
#include "feddkd/optim.hpp"
#include "feddkd/rng.hpp"

namespace feddkd {

/// Shared: batch-norm parameters travel with everything else.
/// PerClient: every client keeps its own BN tensors; broadcasts never
/// overwrite them, averaging skips them, and DKD leaves their slots at zero.
enum class BnMode { Shared, PerClient };

/// Local training flavor. Prox(0) and Max(0) take the exact Plain code path.
struct TrainerKind {
    enum class Kind { Plain, Prox, Max };
    Kind kind = Kind::Plain;
    double mu = 0.0;    // proximal strength
    double beta = 0.0;  // activation-divergence strength

    static TrainerKind plain() { return {Kind::Plain, 0.0, 0.0}; }
    static TrainerKind prox(double mu) { return {Kind::Prox, mu, 0.0}; }
    static TrainerKind max(double beta) { return {Kind::Max, 0.0, beta}; }
};

/// Knobs of the distillation refinement loop. steps == 0 reduces every
/// algorithm in the family to its parameter-averaging baseline.
struct DKDConfig {
    int steps = 0;           // J
    double lr0 = 0.0;        // gamma
    double round_decay = 1.0;
    double step_decay = 1.0;
    std::size_t batch_size = 0;
    int warmup_rounds = 0;   // rounds during which the DKD loop is skipped
    enum class Weighting { Uniform, Proportional };
    Weighting weighting = Weighting::Uniform;

    int effective_steps(int round) const { return round < warmup_rounds ? 0 : steps; }
    double lr_at(int round, int step) const {
        return lr0 * std::pow(round_decay, round) * std::pow(step_decay, step);
    }
};

struct ClientState {
    int client_id = 0;
    ClientShard shard;
    ParamSet params;
    OptimizerState opt_state;
    bool trained_once = false;
    std::vector<Tensor> bn_after_local;  // own BN tensors right after the last local training
};

struct ServerState {
    ParamSet global_params;
    int round_index = 0;
    std::vector<RoundRecord> history;
};

/// max(round_half_up(fraction*K), 1) distinct ids, uniform without
/// replacement, ascending for a deterministic aggregation order.
std::vector<int> sample_clients(int total_clients, double fraction, std::uint64_t seed, int round);

struct LocalTrainOptions {
    int epochs = 1;
    std::size_t batch_size = 32;
    double lr = 0.1;  // already decayed for the current round
    TrainerKind kind;
    OptimizerConfig optimizer;
    BnMode bn_mode = BnMode::Shared;
};

struct LocalTrainResult {
    int steps = 0;
    double mean_loss = 0.0;
    bool small_batch_warning = false;  // batch size exceeded the shard
};

/// E epochs of minibatch updates on the client's shard, starting from the
/// broadcast parameters (own BN tensors retained under PerClient) and a fresh
/// optimizer state. Reshuffles each epoch; a trailing batch of one sample is
/// folded into the previous batch. Loss is cross-entropy against one-hot
/// labels, plus (mu/2)*|w - w0|^2 for Prox, plus
/// beta * mean_i KL(softmax(a_i) || Uniform) for Max, where a_i is the input
/// of the final dense layer.
LocalTrainResult local_train(ClientState& client, const ParamSet& broadcast,
                             const LocalTrainOptions& opts, Rng& rng);

enum class DkdDivergence {
    SoftCrossEntropy,  // the production loss
    SquaredError,      // |teacher logits - student logits|^2; analytic test rigs
};

/// One client's contribution to a DKD step: gradient of the mean divergence
/// between the frozen teacher (client params, Eval mode) and the student
/// (global params, Train mode) over a fresh minibatch, taken w.r.t. the
/// student. Under PerClient the client's BN tensors are substituted into the
/// student before the forward and every BN gradient slot is zeroed.
ParamSet dkd_gradient(const ParamSet& client_params, const ParamSet& student_params,
                      const ClientShard& shard, std::size_t batch_size, Rng& rng, BnMode bn_mode,
                      DkdDivergence divergence = DkdDivergence::SoftCrossEntropy);

struct DkdDiagnostics {
    double max_abs_bn_grad = 0.0;  // largest BN gradient magnitude seen (PerClient)
};

/// Algorithm core of one round's refinement: start from the n-weighted
/// parameter average of the sampled clients (BN excluded under PerClient),
/// then take J gradient steps with rate gamma0 * round_decay^t * step_decay^j,
/// each step averaging per-client DKD gradients (uniform by default, with an
/// n-proportional option). Rounds below warmup skip the loop entirely.
ParamSet dkd_refine(const std::vector<ClientState*>& sampled_clients,
                    const std::vector<double>& data_weights, const DKDConfig& cfg, BnMode bn_mode,
                    int round, std::vector<Rng>& dkd_streams, int workers,
                    DkdDiagnostics* diagnostics = nullptr);

}  // namespace feddkd
