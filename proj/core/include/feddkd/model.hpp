#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "feddkd/tensor.hpp"

namespace feddkd {

enum class Mode { Train, Eval };

struct LayerSpec {
    enum class Kind { Dense, ReLU, BatchNorm };
    Kind kind = Kind::Dense;
    std::size_t in_dim = 0;   // Dense
    std::size_t out_dim = 0;  // Dense
    std::size_t dim = 0;      // BatchNorm

    static LayerSpec dense(std::size_t in, std::size_t out) {
        return {Kind::Dense, in, out, 0};
    }
    static LayerSpec relu() { return {Kind::ReLU, 0, 0, 0}; }
    static LayerSpec batch_norm(std::size_t dim) { return {Kind::BatchNorm, 0, 0, dim}; }

    bool operator==(const LayerSpec&) const = default;
};

/// Layer stack description. Valid specs chain dimensions and end in a Dense
/// layer whose out_dim is the class count.
struct ModelSpec {
    std::vector<LayerSpec> layers;

    void validate() const;
    std::size_t input_dim() const;
    std::size_t num_classes() const;
    bool contains_batch_norm() const;

    bool operator==(const ModelSpec&) const = default;
};

struct ParamTensor {
    std::string name;
    Tensor value;
    bool is_bn = false;      // true for BN scale/shift/running-mean/running-var
    bool trainable = true;   // false for BN running statistics

    bool operator==(const ParamTensor&) const = default;
};

/// All parameters of one network, grouped per layer and carrying the spec.
struct ParamSet {
    ModelSpec spec;
    std::vector<std::vector<ParamTensor>> layers;  // parallel to spec.layers

    bool congruent_with(const ParamSet& other) const;
    void require_congruent(const ParamSet& other, const char* what) const;

    std::size_t tensor_count() const;
    std::size_t value_count() const;
    bool all_finite() const;

    template <typename F>
    void for_each_tensor(F&& f) {
        for (auto& layer : layers)
            for (auto& t : layer) f(t);
    }
    template <typename F>
    void for_each_tensor(F&& f) const {
        for (const auto& layer : layers)
            for (const auto& t : layer) f(t);
    }

    /// Copies of the BN-tagged tensors, in layer order.
    std::vector<Tensor> bn_tensors() const;
    /// Overwrite this set's BN-tagged tensors with `other`'s (congruent sets).
    void copy_bn_from(const ParamSet& other);

    bool operator==(const ParamSet&) const = default;
};

ParamSet make_zero_like(const ParamSet& params);

/// Fresh parameters: Dense weights ~ Uniform(-sqrt(6/in), +sqrt(6/in)), biases
/// zero; BN scale 1, shift 0, running mean 0, running var 1. Deterministic per
/// seed.
ParamSet init_network(const ModelSpec& spec, std::uint64_t seed);

struct BatchNormCache {
    std::vector<double> mean;     // per-feature batch mean (Train) or running mean (Eval)
    std::vector<double> inv_std;  // 1/sqrt(var + eps) actually used
    Tensor normalized;            // pre-scale activations
};

struct ForwardCache {
    Mode mode = Mode::Eval;
    std::size_t batch_size = 0;
    std::vector<LayerSpec> layer_shape;       // congruence token
    std::vector<Tensor> inputs;               // activation entering each layer
    std::vector<BatchNormCache> bn;           // per layer, used only for BN layers
    Tensor penultimate;                       // input to the final Dense layer
    Tensor logits;
};

struct ForwardResult {
    Tensor logits;
    ForwardCache cache;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Runs the network on a [B, D] batch. Train mode normalizes with batch
/// statistics and folds them into the running statistics (momentum 0.1),
/// mutating `params`; Eval mode uses running statistics and leaves `params`
/// untouched. Train-mode BN rejects batches of size 1 (undefined variance).
ForwardResult forward(ParamSet& params, const Tensor& batch, Mode mode);

/// Eval-mode logits without cache bookkeeping; never mutates.
Tensor forward_logits(const ParamSet& params, const Tensor& batch);

/// Exact reverse-mode gradients of any scalar loss of the logits, given that
/// loss's adjoint. `penultimate_adjoint`, when set, is added to the adjoint of
/// the final Dense layer's input (activation-regularized losses). BN
/// running-statistic slots always carry zero gradient.
ParamSet backward(const ParamSet& params, const ForwardCache& cache,
                  const Tensor& dloss_dlogits, const Tensor* penultimate_adjoint = nullptr);

/// Element-wise sum of w_i * params_i over congruent sets; weights must be
/// nonnegative and sum to 1 within 1e-9. With exclude_bn, BN-tagged tensors
/// are copied verbatim from the first set instead of averaged.
ParamSet weighted_average(const std::vector<const ParamSet*>& params_list,
                          const std::vector<double>& weights, bool exclude_bn);
ParamSet weighted_average(const std::vector<ParamSet>& params_list,
                          const std::vector<double>& weights, bool exclude_bn);

}  // namespace feddkd
