// Config-driven federated simulation runner. Produces rounds.csv (byte
// reproducible for a given config + seed) and summary.json (metrics, target
// hits, wall-clock timing) in the output directory.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "feddkd/checkpoint.hpp"
#include "feddkd/config.hpp"
#include "feddkd/engine.hpp"
#include "feddkd/metrics.hpp"

namespace {
using feddkd::RoundRecord;
using nlohmann::json;
}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated learning simulator: distillation-refined aggregation "
                 "(FedDKD family) and parameter-averaging baselines on a dense-network engine"};
    app.name("simulate");

    std::string config_path;
    std::string out_dir = ".";
    std::string algorithm_override;
    std::uint64_t seed_override = 0;
    bool seed_set = false;
    int workers = 1;
    bool quiet = false;

    app.add_option("--config", config_path, "Path to the JSON experiment config")->required();
    app.add_option("--out-dir", out_dir, "Directory for rounds.csv / summary.json");
    app.add_option("--algorithm", algorithm_override,
                   "Override the config's algorithm "
                   "(fedavg|fedprox|fedmax|fedbn|feddkd|feddkd_max|feddkd_bn)");
    auto* seed_opt = app.add_option("--seed", seed_override, "Override the config's master seed");
    app.add_option("--workers", workers, "Worker threads for client work")
        ->check(CLI::PositiveNumber);
    app.add_flag("--quiet", quiet, "Suppress per-round progress output");

    CLI11_PARSE(app, argc, argv);
    seed_set = seed_opt->count() > 0;

    try {
        feddkd::ExperimentConfig cfg = feddkd::load_config(config_path);
        if (!algorithm_override.empty())
            cfg.algorithm = feddkd::algorithm_from_name(algorithm_override);
        if (seed_set) cfg.seed = seed_override;
        cfg.validate();

        std::filesystem::create_directories(out_dir);
        const std::string csv_path = out_dir + "/rounds.csv";
        const std::string summary_path = out_dir + "/summary.json";
        const std::string checkpoint_path = out_dir + "/best_params.txt";

        if (!quiet) {
            std::cout << "algorithm " << feddkd::algorithm_name(cfg.algorithm) << ", seed "
                      << cfg.seed << ", " << cfg.clients << " clients, " << cfg.rounds
                      << " rounds\n";
        }

        using Clock = std::chrono::steady_clock;
        std::vector<double> round_seconds;
        Clock::time_point mark = Clock::now();
        const auto on_round = [&](const RoundRecord& r) {
            const Clock::time_point now = Clock::now();
            round_seconds.push_back(std::chrono::duration<double>(now - mark).count());
            mark = now;
            if (!quiet) {
                std::printf("round %4d | comm %5d | steps %9.1f | loss %.4f | val %.4f | test %.4f\n",
                            r.round, r.comm_rounds_cum, r.train_steps_cum, r.train_loss,
                            r.val_accuracy, r.test_accuracy);
            }
        };

        const Clock::time_point start = Clock::now();
        feddkd::RunResult result = feddkd::run_federated(cfg, workers, on_round);
        const double wall_total = std::chrono::duration<double>(Clock::now() - start).count();

        // rounds.csv stays byte reproducible; wall-clock numbers live in
        // summary.json only.
        feddkd::write_round_csv(result.server.history, csv_path);
        if (result.best_round > 0) feddkd::save_params(result.best_params, checkpoint_path);

        json summary;
        summary["schema_version"] = feddkd::kConfigSchemaVersion;
        summary["algorithm"] = feddkd::algorithm_name(cfg.algorithm);
        summary["seed"] = cfg.seed;
        summary["rounds_completed"] = static_cast<int>(result.server.history.size());
        summary["aborted"] = result.abort_reason ? json(*result.abort_reason) : json(nullptr);
        if (!result.server.history.empty()) {
            const RoundRecord& last = result.server.history.back();
            summary["final"] = {{"train_loss", last.train_loss},
                                {"val_acc", last.val_accuracy},
                                {"test_acc", last.test_accuracy},
                                {"comm_rounds", last.comm_rounds_cum},
                                {"train_steps_mean_cum", last.train_steps_cum},
                                {"dkd_steps", last.dkd_steps_cum}};
        }
        summary["best"] = {{"round", result.best_round},
                           {"val_acc", result.best_val_accuracy},
                           {"test_acc", result.best_test_accuracy}};
        summary["train_steps_total"] = result.total_train_steps;
        if (cfg.target_accuracy) {
            const feddkd::TargetHit hit =
                feddkd::target_hit(result.server.history, *cfg.target_accuracy);
            summary["target"] = {{"accuracy", *cfg.target_accuracy},
                                 {"reached", hit.reached},
                                 {"round", hit.round},
                                 {"comm_rounds", hit.comm_rounds},
                                 {"train_steps", hit.train_steps}};
        }
        summary["timing"] = {{"wall_seconds_total", wall_total},
                             {"wall_seconds_per_round", round_seconds}};
        summary["warnings"] = {{"small_batch", result.small_batch_warning}};
        summary["config"] = json::parse(feddkd::config_to_json(cfg));

        std::ofstream out(summary_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + summary_path);
        out << summary.dump(2) << "\n";
        out.close();

        if (!quiet) {
            std::cout << "best val " << result.best_val_accuracy << " (round " << result.best_round
                      << "), test at best " << result.best_test_accuracy << "\n";
            std::cout << "wrote " << csv_path << " and " << summary_path << "\n";
        }
        if (result.abort_reason) {
            std::cerr << "simulate: run aborted at " << *result.abort_reason << "\n";
            return 2;
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "simulate: " << e.what() << "\n";
        return 1;
    }
}
