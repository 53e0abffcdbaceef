#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "feddkd/model.hpp"

namespace feddkd {

/// Per-tensor optimizer slots, flat in ParamSet iteration order. Lives outside
/// the ParamSet so the same step functions serve local training and tests.
struct OptimizerState {
    std::vector<Tensor> slot_a;  // SGD velocity / Adam first moment
    std::vector<Tensor> slot_b;  // Adam second moment
    long step_count = 0;

    static OptimizerState zeros_like(const ParamSet& params);
};

/// v <- momentum*v + (g + weight_decay*w); w <- w - lr*v. Non-trainable
/// tensors (BN running statistics) are never touched.
void sgd_step(ParamSet& params, const ParamSet& grads, double lr, double momentum,
              double weight_decay, OptimizerState& state);

/// Standard Adam with bias correction; weight decay is added to the gradient.
void adam_step(ParamSet& params, const ParamSet& grads, double lr, double beta1, double beta2,
               double eps, double weight_decay, OptimizerState& state);

struct OptimizerConfig {
    enum class Type { Sgd, Adam };
    Type type = Type::Sgd;
    double lr0 = 0.1;
    double lr_round_decay = 1.0;  // multiplicative, applied per DKD round
    double momentum = 0.0;        // SGD
    double beta1 = 0.9;           // Adam
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;

    double lr_at_round(int round) const { return lr0 * std::pow(lr_round_decay, round); }
};

/// One step with whichever optimizer the config selects, at the given rate.
void optimizer_step(ParamSet& params, const ParamSet& grads, const OptimizerConfig& cfg,
                    double lr, OptimizerState& state);

/// Central finite differences (f(w+eps*e_i) - f(w-eps*e_i)) / (2*eps) per
/// coordinate. The independent oracle for backward passes; throws if f
/// evaluates non-finite.
ParamSet finite_difference_gradient(const std::function<double(const ParamSet&)>& f,
                                    const ParamSet& params, double eps);

}  // namespace feddkd
