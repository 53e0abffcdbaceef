#include "feddkd/fed.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "feddkd/divergence.hpp"
#include "feddkd/parallel.hpp"

namespace feddkd {

std::vector<int> sample_clients(int total_clients, double fraction, std::uint64_t seed,
                                int round) {
    if (total_clients < 1) throw std::invalid_argument("sample_clients: needs >= 1 client");
    if (fraction <= 0.0 || fraction > 1.0)
        throw std::invalid_argument("sample_clients: fraction must be in (0, 1]");
    const double target = fraction * static_cast<double>(total_clients);
    std::size_t m = static_cast<std::size_t>(std::floor(target + 0.5));  // round half up
    m = std::max<std::size_t>(m, 1);
    m = std::min<std::size_t>(m, static_cast<std::size_t>(total_clients));

    Rng rng(mix_seed({seed, 0x5A3CULL, static_cast<std::uint64_t>(round)}));
    const auto picked = rng.sample_indices(static_cast<std::size_t>(total_clients), m);
    std::vector<int> ids(picked.begin(), picked.end());
    return ids;  // sample_indices returns ascending order
}

namespace {

/// Batch index ranges for one epoch: chunks of `batch` over a shuffled index
/// list; a trailing chunk of one sample is folded into the previous chunk.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch) {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    for (std::size_t start = 0; start < n; start += batch)
        ranges.emplace_back(start, std::min(start + batch, n));
    if (ranges.size() >= 2 && ranges.back().second - ranges.back().first == 1) {
        ranges[ranges.size() - 2].second = n;
        ranges.pop_back();
    }
    return ranges;
}

Tensor gather_rows(const Tensor& features, const std::vector<std::size_t>& order,
                   std::size_t begin, std::size_t end) {
    const std::size_t d = features.cols();
    Tensor out({end - begin, d});
    for (std::size_t r = begin; r < end; ++r)
        for (std::size_t c = 0; c < d; ++c) out.at(r - begin, c) = features.at(order[r], c);
    return out;
}

/// d/da of KL(softmax(a) || Uniform) per row: p .* (log p - sum p log p).
Tensor activation_divergence_adjoint(const Tensor& activations, double scale) {
    const Tensor probs = softmax(activations);
    const std::size_t b = probs.rows(), h = probs.cols();
    Tensor adj({b, h});
    for (std::size_t i = 0; i < b; ++i) {
        const double* p = &probs.data()[i * h];
        double mean_log = 0.0;
        for (std::size_t j = 0; j < h; ++j) mean_log += p[j] * std::log(std::max(p[j], kProbFloor));
        for (std::size_t j = 0; j < h; ++j)
            adj.at(i, j) = scale * p[j] * (std::log(std::max(p[j], kProbFloor)) - mean_log);
    }
    return adj;
}

double activation_divergence_value(const Tensor& activations) {
    const Tensor probs = softmax(activations);
    const std::size_t b = probs.rows(), h = probs.cols();
    const double log_h = std::log(static_cast<double>(h));
    double total = 0.0;
    for (std::size_t i = 0; i < b; ++i)
        total += log_h - entropy_raw(&probs.data()[i * h], h);
    return total;
}

}  // namespace

LocalTrainResult local_train(ClientState& client, const ParamSet& broadcast,
                             const LocalTrainOptions& opts, Rng& rng) {
    if (opts.epochs < 0) throw std::invalid_argument("local_train: negative epoch count");
    if (opts.batch_size < 1) throw std::invalid_argument("local_train: batch size must be >= 1");
    const Dataset& data = client.shard.data;
    data.validate();

    ParamSet start = broadcast;
    if (opts.bn_mode == BnMode::PerClient && client.trained_once)
        start.copy_bn_from(client.params);
    client.params = start;
    client.opt_state = OptimizerState::zeros_like(client.params);

    LocalTrainResult result;
    const std::size_t n = data.size();
    result.small_batch_warning = opts.batch_size > n;

    const std::size_t c = client.params.spec.num_classes();
    const bool use_prox = opts.kind.kind == TrainerKind::Kind::Prox && opts.kind.mu != 0.0;
    const bool use_max = opts.kind.kind == TrainerKind::Kind::Max && opts.kind.beta != 0.0;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    double loss_total = 0.0;

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        rng.shuffle(order);
        for (const auto& [begin, end] : batch_ranges(n, opts.batch_size)) {
            const std::size_t b = end - begin;
            const Tensor batch = gather_rows(data.features, order, begin, end);
            ForwardResult fwd = forward(client.params, batch, Mode::Train);

            const Tensor log_probs = log_softmax(fwd.logits);
            const Tensor probs = softmax(fwd.logits);
            double loss = 0.0;
            Tensor dlogits = probs;
            const double inv_b = 1.0 / static_cast<double>(b);
            for (std::size_t i = 0; i < b; ++i) {
                const int y = data.labels[order[begin + i]];
                loss -= log_probs[i * c + y];
                dlogits[i * c + y] -= 1.0;
            }
            loss *= inv_b;
            dlogits.scale(inv_b);

            ParamSet grads;
            if (use_max) {
                const Tensor adj = activation_divergence_adjoint(fwd.cache.penultimate,
                                                                 opts.kind.beta * inv_b);
                loss += opts.kind.beta * inv_b * activation_divergence_value(fwd.cache.penultimate);
                grads = backward(client.params, fwd.cache, dlogits, &adj);
            } else {
                grads = backward(client.params, fwd.cache, dlogits);
            }
            if (use_prox) {
                double sq = 0.0;
                for (std::size_t li = 0; li < grads.layers.size(); ++li)
                    for (std::size_t ti = 0; ti < grads.layers[li].size(); ++ti) {
                        if (!grads.layers[li][ti].trainable) continue;
                        const Tensor& w = client.params.layers[li][ti].value;
                        const Tensor& w0 = start.layers[li][ti].value;
                        Tensor& g = grads.layers[li][ti].value;
                        for (std::size_t vi = 0; vi < g.size(); ++vi) {
                            const double d = w[vi] - w0[vi];
                            g[vi] += opts.kind.mu * d;
                            sq += d * d;
                        }
                    }
                loss += 0.5 * opts.kind.mu * sq;
            }

            optimizer_step(client.params, grads, opts.optimizer, opts.lr, client.opt_state);
            loss_total += loss;
            result.steps += 1;
        }
    }

    result.mean_loss = result.steps > 0 ? loss_total / result.steps : 0.0;
    client.bn_after_local = client.params.bn_tensors();
    client.trained_once = true;
    return result;
}

ParamSet dkd_gradient(const ParamSet& client_params, const ParamSet& student_params,
                      const ClientShard& shard, std::size_t batch_size, Rng& rng, BnMode bn_mode,
                      DkdDivergence divergence) {
    client_params.require_congruent(student_params, "dkd_gradient");
    if (shard.sample_count() == 0) throw std::invalid_argument("dkd_gradient: empty shard");
    if (batch_size < 1) throw std::invalid_argument("dkd_gradient: batch size must be >= 1");

    const std::size_t n = shard.sample_count();
    std::vector<std::size_t> picked;
    if (n <= batch_size) {
        picked.resize(n);
        std::iota(picked.begin(), picked.end(), std::size_t{0});
    } else {
        picked = rng.sample_indices(n, batch_size);
    }
    const std::size_t b = picked.size();
    const std::size_t d = shard.data.dim();
    Tensor batch({b, d});
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t c = 0; c < d; ++c) batch.at(i, c) = shard.data.features.at(picked[i], c);

    const Tensor teacher_logits = forward_logits(client_params, batch);

    ParamSet student = student_params;
    if (bn_mode == BnMode::PerClient) student.copy_bn_from(client_params);
    ForwardResult fwd = forward(student, batch, Mode::Train);

    Tensor dlogits;
    if (divergence == DkdDivergence::SoftCrossEntropy) {
        dlogits = soft_cross_entropy_grad(teacher_logits, fwd.logits);
    } else {
        dlogits = fwd.logits;
        dlogits.add_scaled(teacher_logits, -1.0);
        dlogits.scale(2.0 / static_cast<double>(b));
    }

    ParamSet grads = backward(student, fwd.cache, dlogits);
    if (bn_mode == BnMode::PerClient)
        grads.for_each_tensor([](ParamTensor& t) {
            if (t.is_bn) t.value.fill(0.0);
        });
    return grads;
}

ParamSet dkd_refine(const std::vector<ClientState*>& sampled_clients,
                    const std::vector<double>& data_weights, const DKDConfig& cfg, BnMode bn_mode,
                    int round, std::vector<Rng>& dkd_streams, int workers,
                    DkdDiagnostics* diagnostics) {
    if (sampled_clients.empty()) throw std::invalid_argument("dkd_refine: no clients");
    if (sampled_clients.size() != data_weights.size() ||
        sampled_clients.size() != dkd_streams.size())
        throw std::invalid_argument("dkd_refine: clients/weights/streams length mismatch");

    const std::size_t m = sampled_clients.size();
    std::vector<const ParamSet*> member_params(m);
    for (std::size_t i = 0; i < m; ++i) member_params[i] = &sampled_clients[i]->params;
    ParamSet global =
        weighted_average(member_params, data_weights, /*exclude_bn=*/bn_mode == BnMode::PerClient);

    std::vector<double> step_weights(m, 1.0 / static_cast<double>(m));
    if (cfg.weighting == DKDConfig::Weighting::Proportional) step_weights = data_weights;

    const int j_effective = cfg.effective_steps(round);
    std::vector<ParamSet> grads(m);
    for (int j = 0; j < j_effective; ++j) {
        parallel_for(m, workers, [&](std::size_t i) {
            grads[i] = dkd_gradient(sampled_clients[i]->params, global, sampled_clients[i]->shard,
                                    cfg.batch_size, dkd_streams[i], bn_mode);
        });
        ParamSet aggregate = make_zero_like(global);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t li = 0; li < aggregate.layers.size(); ++li)
                for (std::size_t ti = 0; ti < aggregate.layers[li].size(); ++ti)
                    aggregate.layers[li][ti].value.add_scaled(grads[i].layers[li][ti].value,
                                                              step_weights[i]);
            if (diagnostics != nullptr && bn_mode == BnMode::PerClient) {
                grads[i].for_each_tensor([&](const ParamTensor& t) {
                    if (!t.is_bn) return;
                    for (double v : t.value.data())
                        diagnostics->max_abs_bn_grad =
                            std::max(diagnostics->max_abs_bn_grad, std::abs(v));
                });
            }
        }
        if (!aggregate.all_finite())
            throw std::runtime_error("dkd_refine: non-finite aggregate gradient at round " +
                                     std::to_string(round) + " step " + std::to_string(j));
        const double gamma = cfg.lr_at(round, j);
        for (std::size_t li = 0; li < global.layers.size(); ++li)
            for (std::size_t ti = 0; ti < global.layers[li].size(); ++ti)
                global.layers[li][ti].value.add_scaled(aggregate.layers[li][ti].value, -gamma);
    }
    return global;
}

}  // namespace feddkd
