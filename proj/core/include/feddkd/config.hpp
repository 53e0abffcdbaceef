#pragma once

#include <optional>
#include <string>

#include "feddkd/data.hpp"
#include "feddkd/fed.hpp"
#include "feddkd/model.hpp"
#include "feddkd/optim.hpp"

namespace feddkd {

inline constexpr int kConfigSchemaVersion = 1;

/// Recognized algorithm family. The name fixes the local trainer kind, the BN
/// mode, and whether the DKD loop runs; hyperparameters stay in their own
/// config sections.
enum class Algorithm { FedAvg, FedProx, FedMax, FedBn, FedDkd, FedDkdMax, FedDkdBn };

std::string algorithm_name(Algorithm a);
Algorithm algorithm_from_name(const std::string& name);

struct DataConfig {
    enum class Source { Synthetic, Csv };
    Source source = Source::Synthetic;
    // Synthetic
    int classes = 10;
    int dim = 20;
    int per_class = 500;
    double spread = 1.0;
    int test_per_class = 100;
    std::uint64_t data_seed = 1;
    // Csv
    std::string train_path;
    std::string test_path;

    PartitionSpec partition;
    bool partition_seed_set = false;  // explicit seed vs derived from the master seed
};

/// Everything one experiment needs; mirrors the JSON schema one-for-one.
struct ExperimentConfig {
    Algorithm algorithm = Algorithm::FedAvg;
    std::uint64_t seed = 1;
    int clients = 4;
    double client_fraction = 1.0;
    int rounds = 10;               // T, DKD rounds
    int local_epochs = 1;          // E
    std::size_t batch_size = 32;   // B
    double validation_fraction = 0.1;
    std::optional<double> target_accuracy;
    OptimizerConfig optimizer;
    double prox_mu = 0.0;
    double max_beta = 0.0;
    DKDConfig dkd;
    ModelSpec model;
    DataConfig data;

    void validate() const;

    TrainerKind trainer_kind() const;
    BnMode bn_mode() const;
    bool dkd_enabled() const;
    /// DKD steps per round before warm-up gating: dkd.steps for the DKD
    /// family, 0 for the parameter-averaging baselines.
    int dkd_steps() const { return dkd_enabled() ? dkd.steps : 0; }
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& json_text);
std::string config_to_json(const ExperimentConfig& cfg);

}  // namespace feddkd
