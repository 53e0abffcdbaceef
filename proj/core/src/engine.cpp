#include "feddkd/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "feddkd/parallel.hpp"

namespace feddkd {

namespace {

constexpr std::uint64_t kLocalTrainTag = 0x10CA1ULL;
constexpr std::uint64_t kDkdTag = 0xD15711ULL;
constexpr std::uint64_t kPartitionTag = 0x9A27ULL;
constexpr std::uint64_t kValSplitTag = 0x7A11DULL;
constexpr std::uint64_t kTestDataTag = 0x7E57ULL;
constexpr std::uint64_t kSourceTag = 0x50FCULL;

/// Source s is emulated by a mild anisotropic scaling plus a shift along a
/// fixed per-source direction; source 0 is the identity.
AffineTransform source_transform(int source, int dim) {
    AffineTransform t;
    t.matrix = Tensor::identity(static_cast<std::size_t>(dim));
    for (int d = 0; d < dim; ++d)
        t.matrix.at(d, d) = 1.0 + 0.05 * source * (d % 2 == 0 ? 1.0 : -1.0);
    t.shift.assign(dim, 0.0);
    if (source > 0) {
        Rng rng(mix_seed({kSourceTag, static_cast<std::uint64_t>(source)}));
        double norm = 0.0;
        std::vector<double> dir(dim);
        while (norm < 1e-12) {
            for (double& v : dir) v = rng.normal();
            norm = std::sqrt(std::inner_product(dir.begin(), dir.end(), dir.begin(), 0.0));
        }
        for (int d = 0; d < dim; ++d) t.shift[d] = 0.8 * source * dir[d] / norm;
    }
    return t;
}

}  // namespace

std::uint64_t local_train_stream_seed(std::uint64_t master_seed, int client_id, int round) {
    return mix_seed({master_seed, kLocalTrainTag, static_cast<std::uint64_t>(client_id),
                     static_cast<std::uint64_t>(round)});
}

std::uint64_t dkd_stream_seed(std::uint64_t master_seed, int client_id, int round) {
    return mix_seed({master_seed, kDkdTag, static_cast<std::uint64_t>(client_id),
                     static_cast<std::uint64_t>(round)});
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
    cfg.validate();
    PreparedData out;

    const std::uint64_t split_seed = mix_seed({cfg.seed, kValSplitTag});
    const bool multi_source = cfg.data.partition.scheme == PartitionSpec::Scheme::MultiSource;

    if (multi_source) {
        // Each source is its own client; validation is carved per source so
        // every shard keeps its own distribution.
        std::vector<Dataset> train_sources;
        std::vector<Dataset> val_parts, test_parts;
        for (int s = 0; s < cfg.data.partition.sources; ++s) {
            const AffineTransform t = source_transform(s, cfg.data.dim);
            Dataset full = generate_synthetic(cfg.data.classes, cfg.data.dim, cfg.data.per_class,
                                              cfg.data.spread, &t,
                                              mix_seed({cfg.data.data_seed,
                                                        static_cast<std::uint64_t>(s)}));
            auto [rest, carved] = split_stratified(full, cfg.validation_fraction,
                                                   mix_seed({split_seed,
                                                             static_cast<std::uint64_t>(s)}));
            train_sources.push_back(std::move(rest));
            if (!carved.labels.empty()) val_parts.push_back(std::move(carved));
            test_parts.push_back(generate_synthetic(
                cfg.data.classes, cfg.data.dim, cfg.data.test_per_class, cfg.data.spread, &t,
                mix_seed({cfg.data.data_seed, kTestDataTag, static_cast<std::uint64_t>(s)})));
        }
        out.shards = partition_multisource(train_sources);

        auto concat = [](const std::vector<Dataset>& parts) {
            Dataset all;
            all.num_classes = parts.front().num_classes;
            std::size_t total = 0;
            for (const Dataset& p : parts) total += p.size();
            all.features = Tensor({total, parts.front().dim()});
            all.labels.reserve(total);
            std::size_t row = 0;
            for (const Dataset& p : parts) {
                for (std::size_t r = 0; r < p.size(); ++r, ++row) {
                    for (std::size_t c = 0; c < p.dim(); ++c)
                        all.features.at(row, c) = p.features.at(r, c);
                    all.labels.push_back(p.labels[r]);
                }
            }
            return all;
        };
        out.train = concat(train_sources);
        if (!val_parts.empty()) out.validation = concat(val_parts);
        out.test = concat(test_parts);
        return out;
    }

    Dataset full_train, test;
    if (cfg.data.source == DataConfig::Source::Synthetic) {
        full_train = generate_synthetic(cfg.data.classes, cfg.data.dim, cfg.data.per_class,
                                        cfg.data.spread, nullptr, cfg.data.data_seed);
        test = generate_synthetic(cfg.data.classes, cfg.data.dim, cfg.data.test_per_class,
                                  cfg.data.spread, nullptr,
                                  mix_seed({cfg.data.data_seed, kTestDataTag}));
    } else {
        full_train = load_csv(cfg.data.train_path);
        test = load_csv(cfg.data.test_path);
        if (full_train.num_classes != test.num_classes || full_train.dim() != test.dim())
            throw std::invalid_argument("prepare_data: train/test CSV shape or class mismatch");
    }

    auto [rest, carved] = split_stratified(full_train, cfg.validation_fraction, split_seed);
    out.train = std::move(rest);
    out.validation = std::move(carved);
    out.test = std::move(test);

    PartitionSpec part = cfg.data.partition;
    part.clients = cfg.clients;
    if (!cfg.data.partition_seed_set) part.seed = mix_seed({cfg.seed, kPartitionTag});
    out.shards = make_partition(out.train, part);
    return out;
}

RunResult run_federated(const ExperimentConfig& cfg, int workers, const RoundCallback& on_round) {
    cfg.validate();
    PreparedData data = prepare_data(cfg);

    if (data.train.dim() != cfg.model.input_dim())
        throw std::invalid_argument("run_federated: model input dim " +
                                    std::to_string(cfg.model.input_dim()) +
                                    " does not match data dim " + std::to_string(data.train.dim()));
    if (data.train.num_classes != static_cast<int>(cfg.model.num_classes()))
        throw std::invalid_argument("run_federated: model classes do not match data classes");
    if (data.shards.size() != static_cast<std::size_t>(cfg.clients))
        throw std::logic_error("run_federated: shard count does not match client count");

    RunResult result;
    result.server.global_params = init_network(cfg.model, cfg.seed);
    result.best_params = result.server.global_params;
    result.clients.reserve(data.shards.size());
    for (const ClientShard& shard : data.shards) {
        ClientState cs;
        cs.client_id = shard.client_id;
        cs.shard = shard;
        cs.params = result.server.global_params;
        result.clients.push_back(std::move(cs));
    }

    DKDConfig dkd_cfg = cfg.dkd;
    dkd_cfg.steps = cfg.dkd_steps();  // 0 for the averaging baselines
    const BnMode bn_mode = cfg.bn_mode();
    const TrainerKind trainer = cfg.trainer_kind();

    RoundRecord prev;
    for (int t = 0; t < cfg.rounds; ++t) {
        try {
            const std::vector<int> sampled = sample_clients(cfg.clients, cfg.client_fraction,
                                                            cfg.seed, t);
            const std::size_t m = sampled.size();
            const ParamSet broadcast = result.server.global_params;

            LocalTrainOptions opts;
            opts.epochs = cfg.local_epochs;
            opts.batch_size = cfg.batch_size;
            opts.lr = cfg.optimizer.lr_at_round(t);
            opts.kind = trainer;
            opts.optimizer = cfg.optimizer;
            opts.bn_mode = bn_mode;

            std::vector<LocalTrainResult> train_results(m);
            parallel_for(m, workers, [&](std::size_t i) {
                ClientState& cs = result.clients[sampled[i]];
                Rng stream(local_train_stream_seed(cfg.seed, cs.client_id, t));
                train_results[i] = local_train(cs, broadcast, opts, stream);
            });

            std::vector<ClientState*> members(m);
            std::vector<std::size_t> counts(m);
            std::vector<Rng> dkd_streams;
            dkd_streams.reserve(m);
            for (std::size_t i = 0; i < m; ++i) {
                members[i] = &result.clients[sampled[i]];
                counts[i] = members[i]->shard.sample_count();
                dkd_streams.emplace_back(dkd_stream_seed(cfg.seed, members[i]->client_id, t));
            }

            result.server.global_params =
                dkd_refine(members, compute_weights(counts), dkd_cfg, bn_mode, t, dkd_streams,
                           workers, &result.dkd_diagnostics);
            if (!result.server.global_params.all_finite())
                throw std::runtime_error("global parameters diverged (non-finite)");

            double mean_steps = 0.0;
            for (const LocalTrainResult& r : train_results) {
                mean_steps += r.steps;
                result.total_train_steps += r.steps;
                result.small_batch_warning = result.small_batch_warning || r.small_batch_warning;
            }
            mean_steps /= static_cast<double>(m);

            RoundRecord rec = account_round(prev, dkd_cfg.effective_steps(t), mean_steps);
            rec.train_loss = evaluate(result.server.global_params, data.train).loss;
            if (data.has_validation())
                rec.val_accuracy = evaluate(result.server.global_params, data.validation).accuracy;
            rec.test_accuracy = evaluate(result.server.global_params, data.test).accuracy;
            result.server.history.push_back(rec);
            result.server.round_index = t + 1;
            prev = rec;

            // Best-on-validation model; without a validation set the final
            // model stands in.
            if (!data.has_validation() || rec.val_accuracy > result.best_val_accuracy ||
                result.best_round == 0) {
                result.best_val_accuracy = rec.val_accuracy;
                result.best_test_accuracy = rec.test_accuracy;
                result.best_round = rec.round;
                result.best_params = result.server.global_params;
            }
            if (on_round) on_round(rec);
        } catch (const std::exception& e) {
            result.abort_reason = "round " + std::to_string(t + 1) + ": " + e.what();
            break;
        }
    }
    return result;
}

}  // namespace feddkd
