#pragma once

#include <string>
#include <vector>

#include "feddkd/data.hpp"
#include "feddkd/model.hpp"

namespace feddkd {

/// Per-round accounting. One DKD round costs 1 + J_effective communication
/// rounds: one broadcast/collect for local training plus one per DKD step.
struct RoundRecord {
    int round = 0;               // 1-based DKD round count
    int comm_rounds_cum = 0;
    double train_steps_cum = 0;  // per-activated-client average, cumulative
    int dkd_steps_cum = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
    double test_accuracy = 0.0;
    double wall_seconds = 0.0;
};

RoundRecord account_round(const RoundRecord& prev, int j_effective, double mean_steps_this_round);

struct EvalResult {
    double accuracy = 0.0;
    double loss = 0.0;  // mean cross-entropy
};

/// Eval-mode forward over the whole dataset. Predictions are argmax logits
/// with ties broken toward the lowest class index.
EvalResult evaluate(const ParamSet& params, const Dataset& ds);

/// Header "round,comm_rounds,train_steps,dkd_steps,train_loss,val_acc,
/// test_acc,wall_seconds"; one row per round, floats with 6 decimals, UTF-8,
/// LF line endings.
void write_round_csv(const std::vector<RoundRecord>& history, const std::string& path);

std::vector<RoundRecord> read_round_csv(const std::string& path);

struct TargetHit {
    bool reached = false;
    int round = 0;
    int comm_rounds = 0;
    double train_steps = 0.0;
};

/// First round whose validation accuracy reaches the target, with its
/// cumulative communication and training-step cost.
TargetHit target_hit(const std::vector<RoundRecord>& history, double target);

}  // namespace feddkd
