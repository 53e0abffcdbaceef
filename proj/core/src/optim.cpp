#include "feddkd/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace feddkd {

OptimizerState OptimizerState::zeros_like(const ParamSet& params) {
    OptimizerState s;
    params.for_each_tensor([&](const ParamTensor& t) {
        s.slot_a.emplace_back(t.value.shape(), 0.0);
        s.slot_b.emplace_back(t.value.shape(), 0.0);
    });
    return s;
}

namespace {

void require_state(const ParamSet& params, const ParamSet& grads, const OptimizerState& state,
                   const char* what) {
    params.require_congruent(grads, what);
    if (state.slot_a.size() != params.tensor_count() ||
        state.slot_b.size() != params.tensor_count())
        throw std::invalid_argument(std::string(what) + ": optimizer state size mismatch");
    std::size_t i = 0;
    bool ok = true;
    params.for_each_tensor([&](const ParamTensor& t) {
        ok = ok && state.slot_a[i].same_shape(t.value) && state.slot_b[i].same_shape(t.value);
        ++i;
    });
    if (!ok) throw std::invalid_argument(std::string(what) + ": optimizer state shape mismatch");
}

}  // namespace

void sgd_step(ParamSet& params, const ParamSet& grads, double lr, double momentum,
              double weight_decay, OptimizerState& state) {
    require_state(params, grads, state, "sgd_step");
    std::size_t slot = 0;
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        for (std::size_t j = 0; j < params.layers[i].size(); ++j, ++slot) {
            ParamTensor& t = params.layers[i][j];
            if (!t.trainable) continue;
            const Tensor& g = grads.layers[i][j].value;
            Tensor& v = state.slot_a[slot];
            for (std::size_t n = 0; n < t.value.size(); ++n) {
                const double eff = g[n] + weight_decay * t.value[n];
                v[n] = momentum * v[n] + eff;
                t.value[n] -= lr * v[n];
            }
        }
    }
    ++state.step_count;
}

void adam_step(ParamSet& params, const ParamSet& grads, double lr, double beta1, double beta2,
               double eps, double weight_decay, OptimizerState& state) {
    require_state(params, grads, state, "adam_step");
    ++state.step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step_count));
    std::size_t slot = 0;
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        for (std::size_t j = 0; j < params.layers[i].size(); ++j, ++slot) {
            ParamTensor& t = params.layers[i][j];
            if (!t.trainable) continue;
            const Tensor& g = grads.layers[i][j].value;
            Tensor& m = state.slot_a[slot];
            Tensor& v = state.slot_b[slot];
            for (std::size_t n = 0; n < t.value.size(); ++n) {
                const double eff = g[n] + weight_decay * t.value[n];
                m[n] = beta1 * m[n] + (1.0 - beta1) * eff;
                v[n] = beta2 * v[n] + (1.0 - beta2) * eff * eff;
                const double m_hat = m[n] / bc1;
                const double v_hat = v[n] / bc2;
                t.value[n] -= lr * m_hat / (std::sqrt(v_hat) + eps);
            }
        }
    }
}

void optimizer_step(ParamSet& params, const ParamSet& grads, const OptimizerConfig& cfg,
                    double lr, OptimizerState& state) {
    if (cfg.type == OptimizerConfig::Type::Sgd)
        sgd_step(params, grads, lr, cfg.momentum, cfg.weight_decay, state);
    else
        adam_step(params, grads, lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay, state);
}

ParamSet finite_difference_gradient(const std::function<double(const ParamSet&)>& f,
                                    const ParamSet& params, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("finite_difference_gradient: eps must be positive");
    ParamSet grads = make_zero_like(params);
    ParamSet probe = params;
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        for (std::size_t j = 0; j < params.layers[i].size(); ++j) {
            Tensor& pv = probe.layers[i][j].value;
            Tensor& gv = grads.layers[i][j].value;
            for (std::size_t n = 0; n < pv.size(); ++n) {
                const double saved = pv[n];
                pv[n] = saved + eps;
                const double up = f(probe);
                pv[n] = saved - eps;
                const double down = f(probe);
                pv[n] = saved;
                if (!std::isfinite(up) || !std::isfinite(down))
                    throw std::runtime_error("finite_difference_gradient: non-finite objective");
                gv[n] = (up - down) / (2.0 * eps);
            }
        }
    }
    return grads;
}

}  // namespace feddkd
