#include "feddkd/model.hpp"

#include <cmath>
#include <stdexcept>

#include "feddkd/rng.hpp"

namespace feddkd {

void ModelSpec::validate() const {
    if (layers.empty()) throw std::invalid_argument("model spec: no layers");
    std::size_t width = 0;
    bool have_width = false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        switch (l.kind) {
            case LayerSpec::Kind::Dense:
                if (l.in_dim == 0 || l.out_dim == 0)
                    throw std::invalid_argument("model spec: dense layer with zero dimension");
                if (have_width && width != l.in_dim)
                    throw std::invalid_argument("model spec: dense in_dim breaks the chain at layer " +
                                                std::to_string(i));
                width = l.out_dim;
                have_width = true;
                break;
            case LayerSpec::Kind::ReLU:
                if (!have_width)
                    throw std::invalid_argument("model spec: relu before any dense layer");
                break;
            case LayerSpec::Kind::BatchNorm:
                if (!have_width || l.dim != width)
                    throw std::invalid_argument("model spec: batch_norm dim breaks the chain at layer " +
                                                std::to_string(i));
                break;
        }
    }
    if (layers.back().kind != LayerSpec::Kind::Dense)
        throw std::invalid_argument("model spec: final layer must be dense");
}

std::size_t ModelSpec::input_dim() const {
    for (const LayerSpec& l : layers)
        if (l.kind == LayerSpec::Kind::Dense) return l.in_dim;
    throw std::logic_error("model spec: no dense layer");
}

std::size_t ModelSpec::num_classes() const {
    if (layers.empty() || layers.back().kind != LayerSpec::Kind::Dense)
        throw std::logic_error("model spec: final layer must be dense");
    return layers.back().out_dim;
}

bool ModelSpec::contains_batch_norm() const {
    for (const LayerSpec& l : layers)
        if (l.kind == LayerSpec::Kind::BatchNorm) return true;
    return false;
}

bool ParamSet::congruent_with(const ParamSet& other) const {
    if (spec != other.spec || layers.size() != other.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].size() != other.layers[i].size()) return false;
        for (std::size_t j = 0; j < layers[i].size(); ++j) {
            const ParamTensor& a = layers[i][j];
            const ParamTensor& b = other.layers[i][j];
            if (a.name != b.name || a.is_bn != b.is_bn || a.trainable != b.trainable ||
                !a.value.same_shape(b.value))
                return false;
        }
    }
    return true;
}

void ParamSet::require_congruent(const ParamSet& other, const char* what) const {
    if (!congruent_with(other))
        throw std::invalid_argument(std::string(what) + ": parameter sets not congruent");
}

std::size_t ParamSet::tensor_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers) n += layer.size();
    return n;
}

std::size_t ParamSet::value_count() const {
    std::size_t n = 0;
    for_each_tensor([&](const ParamTensor& t) { n += t.value.size(); });
    return n;
}

bool ParamSet::all_finite() const {
    bool ok = true;
    for_each_tensor([&](const ParamTensor& t) { ok = ok && t.value.all_finite(); });
    return ok;
}

std::vector<Tensor> ParamSet::bn_tensors() const {
    std::vector<Tensor> out;
    for_each_tensor([&](const ParamTensor& t) {
        if (t.is_bn) out.push_back(t.value);
    });
    return out;
}

void ParamSet::copy_bn_from(const ParamSet& other) {
    require_congruent(other, "copy_bn_from");
    for (std::size_t i = 0; i < layers.size(); ++i)
        for (std::size_t j = 0; j < layers[i].size(); ++j)
            if (layers[i][j].is_bn) layers[i][j].value = other.layers[i][j].value;
}

ParamSet make_zero_like(const ParamSet& params) {
    ParamSet out = params;
    out.for_each_tensor([](ParamTensor& t) { t.value.fill(0.0); });
    return out;
}

ParamSet init_network(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    ParamSet out;
    out.spec = spec;
    out.layers.resize(spec.layers.size());
    Rng rng(mix_seed({seed, 0x1217ULL}));
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        if (l.kind == LayerSpec::Kind::Dense) {
            const double bound = std::sqrt(6.0 / static_cast<double>(l.in_dim));
            Tensor w({l.in_dim, l.out_dim});
            for (double& v : w.data()) v = rng.uniform(-bound, bound);
            out.layers[i].push_back({"weight", std::move(w), false, true});
            out.layers[i].push_back({"bias", Tensor::vector(l.out_dim, 0.0), false, true});
        } else if (l.kind == LayerSpec::Kind::BatchNorm) {
            out.layers[i].push_back({"bn_scale", Tensor::vector(l.dim, 1.0), true, true});
            out.layers[i].push_back({"bn_shift", Tensor::vector(l.dim, 0.0), true, true});
            out.layers[i].push_back({"bn_running_mean", Tensor::vector(l.dim, 0.0), true, false});
            out.layers[i].push_back({"bn_running_var", Tensor::vector(l.dim, 1.0), true, false});
        }
    }
    return out;
}

namespace {

const Tensor& tensor_of(const ParamSet& p, std::size_t layer, std::size_t slot) {
    return p.layers[layer][slot].value;
}

void require_batch(const Tensor& batch, const ParamSet& params) {
    if (batch.rank() != 2) throw std::invalid_argument("forward: batch must be [B, D]");
    if (batch.cols() != params.spec.input_dim())
        throw std::invalid_argument("forward: batch width " + std::to_string(batch.cols()) +
                                    " does not match input dim " +
                                    std::to_string(params.spec.input_dim()));
}

std::size_t final_dense_index(const ModelSpec& spec) { return spec.layers.size() - 1; }

}  // namespace

ForwardResult forward(ParamSet& params, const Tensor& batch, Mode mode) {
    require_batch(batch, params);
    const std::size_t b = batch.rows();
    const std::size_t n_layers = params.spec.layers.size();
    const std::size_t last_dense = final_dense_index(params.spec);

    ForwardCache cache;
    cache.mode = mode;
    cache.batch_size = b;
    cache.layer_shape = params.spec.layers;
    cache.inputs.reserve(n_layers);
    cache.bn.resize(n_layers);

    Tensor x = batch;
    for (std::size_t i = 0; i < n_layers; ++i) {
        const LayerSpec& l = params.spec.layers[i];
        cache.inputs.push_back(x);
        if (i == last_dense) cache.penultimate = x;
        switch (l.kind) {
            case LayerSpec::Kind::Dense: {
                Tensor y = matmul(x, tensor_of(params, i, 0));
                const Tensor& bias = tensor_of(params, i, 1);
                for (std::size_t r = 0; r < b; ++r)
                    for (std::size_t c = 0; c < l.out_dim; ++c) y.at(r, c) += bias[c];
                x = std::move(y);
                break;
            }
            case LayerSpec::Kind::ReLU: {
                for (double& v : x.data()) v = v > 0.0 ? v : 0.0;
                break;
            }
            case LayerSpec::Kind::BatchNorm: {
                const std::size_t f = l.dim;
                BatchNormCache& bc = cache.bn[i];
                bc.mean.assign(f, 0.0);
                bc.inv_std.assign(f, 0.0);
                if (mode == Mode::Train) {
                    if (b < 2)
                        throw std::invalid_argument(
                            "forward: train-mode batch norm needs batch size >= 2");
                    std::vector<double> var(f, 0.0);
                    for (std::size_t r = 0; r < b; ++r)
                        for (std::size_t c = 0; c < f; ++c) bc.mean[c] += x.at(r, c);
                    for (double& m : bc.mean) m /= static_cast<double>(b);
                    for (std::size_t r = 0; r < b; ++r)
                        for (std::size_t c = 0; c < f; ++c) {
                            const double d = x.at(r, c) - bc.mean[c];
                            var[c] += d * d;
                        }
                    for (double& v : var) v /= static_cast<double>(b);
                    for (std::size_t c = 0; c < f; ++c)
                        bc.inv_std[c] = 1.0 / std::sqrt(var[c] + kBatchNormEps);
                    // Running stats use the unbiased variance estimate.
                    Tensor& rm = params.layers[i][2].value;
                    Tensor& rv = params.layers[i][3].value;
                    const double unbias = static_cast<double>(b) / static_cast<double>(b - 1);
                    for (std::size_t c = 0; c < f; ++c) {
                        rm[c] = (1.0 - kBatchNormMomentum) * rm[c] + kBatchNormMomentum * bc.mean[c];
                        rv[c] = (1.0 - kBatchNormMomentum) * rv[c] +
                                kBatchNormMomentum * var[c] * unbias;
                    }
                } else {
                    const Tensor& rm = tensor_of(params, i, 2);
                    const Tensor& rv = tensor_of(params, i, 3);
                    for (std::size_t c = 0; c < f; ++c) {
                        bc.mean[c] = rm[c];
                        bc.inv_std[c] = 1.0 / std::sqrt(rv[c] + kBatchNormEps);
                    }
                }
                const Tensor& scale = tensor_of(params, i, 0);
                const Tensor& shift = tensor_of(params, i, 1);
                bc.normalized = Tensor({b, f});
                for (std::size_t r = 0; r < b; ++r)
                    for (std::size_t c = 0; c < f; ++c) {
                        const double xh = (x.at(r, c) - bc.mean[c]) * bc.inv_std[c];
                        bc.normalized.at(r, c) = xh;
                        x.at(r, c) = scale[c] * xh + shift[c];
                    }
                break;
            }
        }
    }
    cache.logits = x;
    ForwardResult result;
    result.logits = std::move(x);
    result.cache = std::move(cache);
    return result;
}

Tensor forward_logits(const ParamSet& params, const Tensor& batch) {
    // forward() writes to params only on the Train path; Eval is read-only.
    ParamSet& mutable_params = const_cast<ParamSet&>(params);
    ForwardResult r = forward(mutable_params, batch, Mode::Eval);
    return std::move(r.logits);
}

ParamSet backward(const ParamSet& params, const ForwardCache& cache,
                  const Tensor& dloss_dlogits, const Tensor* penultimate_adjoint) {
    if (cache.layer_shape != params.spec.layers)
        throw std::invalid_argument("backward: cache does not match parameter structure");
    if (dloss_dlogits.rank() != 2 || dloss_dlogits.rows() != cache.batch_size ||
        dloss_dlogits.cols() != params.spec.num_classes())
        throw std::invalid_argument("backward: adjoint shape mismatch");

    const std::size_t n_layers = params.spec.layers.size();
    const std::size_t last_dense = final_dense_index(params.spec);
    const std::size_t b = cache.batch_size;

    ParamSet grads = make_zero_like(params);
    Tensor dy = dloss_dlogits;

    for (std::size_t ii = n_layers; ii-- > 0;) {
        const LayerSpec& l = params.spec.layers[ii];
        const Tensor& x = cache.inputs[ii];
        switch (l.kind) {
            case LayerSpec::Kind::Dense: {
                grads.layers[ii][0].value = matmul_transpose_a(x, dy);
                Tensor& db = grads.layers[ii][1].value;
                for (std::size_t r = 0; r < b; ++r)
                    for (std::size_t c = 0; c < l.out_dim; ++c) db[c] += dy.at(r, c);
                dy = matmul_transpose_b(dy, tensor_of(params, ii, 0));
                if (ii == last_dense && penultimate_adjoint != nullptr) {
                    if (!penultimate_adjoint->same_shape(dy))
                        throw std::invalid_argument("backward: penultimate adjoint shape mismatch");
                    dy.add_scaled(*penultimate_adjoint, 1.0);
                }
                break;
            }
            case LayerSpec::Kind::ReLU: {
                for (std::size_t i = 0; i < dy.size(); ++i)
                    if (x.data()[i] <= 0.0) dy[i] = 0.0;
                break;
            }
            case LayerSpec::Kind::BatchNorm: {
                const std::size_t f = l.dim;
                const BatchNormCache& bc = cache.bn[ii];
                const Tensor& scale = tensor_of(params, ii, 0);
                Tensor& dscale = grads.layers[ii][0].value;
                Tensor& dshift = grads.layers[ii][1].value;
                for (std::size_t r = 0; r < b; ++r)
                    for (std::size_t c = 0; c < f; ++c) {
                        dscale[c] += dy.at(r, c) * bc.normalized.at(r, c);
                        dshift[c] += dy.at(r, c);
                    }
                if (cache.mode == Mode::Train) {
                    // Full backprop through the batch statistics:
                    // dx = inv_std/B * (B*dxh - sum(dxh) - xh * sum(dxh*xh))
                    std::vector<double> sum_dxh(f, 0.0), sum_dxh_xh(f, 0.0);
                    for (std::size_t r = 0; r < b; ++r)
                        for (std::size_t c = 0; c < f; ++c) {
                            const double dxh = dy.at(r, c) * scale[c];
                            sum_dxh[c] += dxh;
                            sum_dxh_xh[c] += dxh * bc.normalized.at(r, c);
                        }
                    const double inv_b = 1.0 / static_cast<double>(b);
                    for (std::size_t r = 0; r < b; ++r)
                        for (std::size_t c = 0; c < f; ++c) {
                            const double dxh = dy.at(r, c) * scale[c];
                            dy.at(r, c) = bc.inv_std[c] *
                                          (dxh - inv_b * sum_dxh[c] -
                                           inv_b * bc.normalized.at(r, c) * sum_dxh_xh[c]);
                        }
                } else {
                    for (std::size_t r = 0; r < b; ++r)
                        for (std::size_t c = 0; c < f; ++c)
                            dy.at(r, c) = dy.at(r, c) * scale[c] * bc.inv_std[c];
                }
                break;
            }
        }
    }
    return grads;
}

ParamSet weighted_average(const std::vector<const ParamSet*>& params_list,
                          const std::vector<double>& weights, bool exclude_bn) {
    if (params_list.empty()) throw std::invalid_argument("weighted_average: empty list");
    if (params_list.size() != weights.size())
        throw std::invalid_argument("weighted_average: weights/params length mismatch");
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw std::invalid_argument("weighted_average: negative weight");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("weighted_average: weights must sum to 1");
    for (const ParamSet* p : params_list)
        params_list.front()->require_congruent(*p, "weighted_average");

    ParamSet out = make_zero_like(*params_list.front());
    for (std::size_t i = 0; i < out.layers.size(); ++i) {
        for (std::size_t j = 0; j < out.layers[i].size(); ++j) {
            ParamTensor& t = out.layers[i][j];
            if (exclude_bn && t.is_bn) {
                t.value = params_list.front()->layers[i][j].value;
                continue;
            }
            for (std::size_t k = 0; k < params_list.size(); ++k)
                t.value.add_scaled(params_list[k]->layers[i][j].value, weights[k]);
        }
    }
    return out;
}

ParamSet weighted_average(const std::vector<ParamSet>& params_list,
                          const std::vector<double>& weights, bool exclude_bn) {
    std::vector<const ParamSet*> ptrs;
    ptrs.reserve(params_list.size());
    for (const ParamSet& p : params_list) ptrs.push_back(&p);
    return weighted_average(ptrs, weights, exclude_bn);
}

}  // namespace feddkd
