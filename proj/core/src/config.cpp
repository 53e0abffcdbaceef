#include "feddkd/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace feddkd {

using nlohmann::json;

std::string algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::FedAvg: return "fedavg";
        case Algorithm::FedProx: return "fedprox";
        case Algorithm::FedMax: return "fedmax";
        case Algorithm::FedBn: return "fedbn";
        case Algorithm::FedDkd: return "feddkd";
        case Algorithm::FedDkdMax: return "feddkd_max";
        case Algorithm::FedDkdBn: return "feddkd_bn";
    }
    throw std::logic_error("algorithm_name: unknown algorithm");
}

Algorithm algorithm_from_name(const std::string& name) {
    if (name == "fedavg") return Algorithm::FedAvg;
    if (name == "fedprox") return Algorithm::FedProx;
    if (name == "fedmax") return Algorithm::FedMax;
    if (name == "fedbn") return Algorithm::FedBn;
    if (name == "feddkd") return Algorithm::FedDkd;
    if (name == "feddkd_max") return Algorithm::FedDkdMax;
    if (name == "feddkd_bn") return Algorithm::FedDkdBn;
    throw std::invalid_argument(
        "unknown algorithm '" + name +
        "' (expected fedavg|fedprox|fedmax|fedbn|feddkd|feddkd_max|feddkd_bn)");
}

TrainerKind ExperimentConfig::trainer_kind() const {
    switch (algorithm) {
        case Algorithm::FedProx: return TrainerKind::prox(prox_mu);
        case Algorithm::FedMax:
        case Algorithm::FedDkdMax: return TrainerKind::max(max_beta);
        default: return TrainerKind::plain();
    }
}

BnMode ExperimentConfig::bn_mode() const {
    return (algorithm == Algorithm::FedBn || algorithm == Algorithm::FedDkdBn)
               ? BnMode::PerClient
               : BnMode::Shared;
}

bool ExperimentConfig::dkd_enabled() const {
    return algorithm == Algorithm::FedDkd || algorithm == Algorithm::FedDkdMax ||
           algorithm == Algorithm::FedDkdBn;
}

void ExperimentConfig::validate() const {
    if (clients < 1) throw std::invalid_argument("config: clients must be >= 1");
    if (client_fraction <= 0.0 || client_fraction > 1.0)
        throw std::invalid_argument("config: client_fraction must be in (0, 1]");
    if (rounds < 0) throw std::invalid_argument("config: rounds must be >= 0");
    if (local_epochs < 0) throw std::invalid_argument("config: local_epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (validation_fraction < 0.0 || validation_fraction > 0.5)
        throw std::invalid_argument("config: validation_fraction must be in [0, 0.5]");
    if (optimizer.lr0 <= 0.0) throw std::invalid_argument("config: optimizer.lr must be positive");
    if (optimizer.lr_round_decay <= 0.0)
        throw std::invalid_argument("config: optimizer.lr_round_decay must be positive");
    if (prox_mu < 0.0) throw std::invalid_argument("config: trainer.mu must be >= 0");
    if (max_beta < 0.0) throw std::invalid_argument("config: trainer.beta must be >= 0");
    if (dkd.steps < 0) throw std::invalid_argument("config: dkd.steps must be >= 0");
    if (dkd.warmup_rounds < 0) throw std::invalid_argument("config: dkd.warmup_rounds must be >= 0");
    if (dkd_enabled() && dkd.steps > 0) {
        if (dkd.lr0 <= 0.0) throw std::invalid_argument("config: dkd.lr must be positive");
        if (dkd.round_decay <= 0.0 || dkd.step_decay <= 0.0)
            throw std::invalid_argument("config: dkd decay rates must be positive");
        if (dkd.batch_size < 1) throw std::invalid_argument("config: dkd.batch_size must be >= 1");
    }
    model.validate();
    if (data.source == DataConfig::Source::Synthetic) {
        if (data.classes < 2) throw std::invalid_argument("config: data.classes must be >= 2");
        if (data.dim < 1) throw std::invalid_argument("config: data.dim must be >= 1");
        if (data.per_class < 1) throw std::invalid_argument("config: data.per_class must be >= 1");
        if (data.test_per_class < 1)
            throw std::invalid_argument("config: data.test_per_class must be >= 1");
        if (data.spread < 0.0) throw std::invalid_argument("config: data.spread must be >= 0");
    } else {
        if (data.train_path.empty()) throw std::invalid_argument("config: data.train_path missing");
        if (data.test_path.empty()) throw std::invalid_argument("config: data.test_path missing");
    }
    if (data.partition.scheme == PartitionSpec::Scheme::MultiSource) {
        if (data.source != DataConfig::Source::Synthetic)
            throw std::invalid_argument("config: multi_source partition needs synthetic data");
        if (data.partition.sources != clients)
            throw std::invalid_argument("config: multi_source needs clients == sources");
    }
    if (target_accuracy && (*target_accuracy <= 0.0 || *target_accuracy > 1.0))
        throw std::invalid_argument("config: target_accuracy must be in (0, 1]");
}

namespace {

ModelSpec model_from_json(const json& j) {
    ModelSpec spec;
    if (!j.is_array()) throw std::invalid_argument("config: model must be an array of layers");
    for (const json& layer : j) {
        const std::string type = layer.at("type").get<std::string>();
        if (type == "dense")
            spec.layers.push_back(LayerSpec::dense(layer.at("in").get<std::size_t>(),
                                                   layer.at("out").get<std::size_t>()));
        else if (type == "relu")
            spec.layers.push_back(LayerSpec::relu());
        else if (type == "batch_norm")
            spec.layers.push_back(LayerSpec::batch_norm(layer.at("dim").get<std::size_t>()));
        else
            throw std::invalid_argument("config: unknown layer type '" + type + "'");
    }
    return spec;
}

json model_to_json(const ModelSpec& spec) {
    json out = json::array();
    for (const LayerSpec& l : spec.layers) {
        json layer;
        switch (l.kind) {
            case LayerSpec::Kind::Dense:
                layer = {{"type", "dense"}, {"in", l.in_dim}, {"out", l.out_dim}};
                break;
            case LayerSpec::Kind::ReLU: layer = {{"type", "relu"}}; break;
            case LayerSpec::Kind::BatchNorm:
                layer = {{"type", "batch_norm"}, {"dim", l.dim}};
                break;
        }
        out.push_back(layer);
    }
    return out;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
    }

    const int version = j.value("schema_version", 0);
    if (version != kConfigSchemaVersion)
        throw std::invalid_argument("config: schema_version must be " +
                                    std::to_string(kConfigSchemaVersion));

    ExperimentConfig cfg;
    cfg.algorithm = algorithm_from_name(j.at("algorithm").get<std::string>());
    cfg.seed = j.value("seed", std::uint64_t{1});
    cfg.clients = j.at("clients").get<int>();
    cfg.client_fraction = j.value("client_fraction", 1.0);
    cfg.rounds = j.at("rounds").get<int>();
    cfg.local_epochs = j.value("local_epochs", 1);
    cfg.batch_size = j.value("batch_size", std::size_t{32});
    cfg.validation_fraction = j.value("validation_fraction", 0.1);
    if (j.contains("target_accuracy") && !j["target_accuracy"].is_null())
        cfg.target_accuracy = j["target_accuracy"].get<double>();

    const json& opt = j.at("optimizer");
    const std::string opt_type = opt.value("type", "sgd");
    if (opt_type == "sgd")
        cfg.optimizer.type = OptimizerConfig::Type::Sgd;
    else if (opt_type == "adam")
        cfg.optimizer.type = OptimizerConfig::Type::Adam;
    else
        throw std::invalid_argument("config: optimizer.type must be sgd or adam");
    cfg.optimizer.lr0 = opt.at("lr").get<double>();
    cfg.optimizer.lr_round_decay = opt.value("lr_round_decay", 1.0);
    cfg.optimizer.momentum = opt.value("momentum", 0.0);
    cfg.optimizer.beta1 = opt.value("beta1", 0.9);
    cfg.optimizer.beta2 = opt.value("beta2", 0.999);
    cfg.optimizer.eps = opt.value("eps", 1e-8);
    cfg.optimizer.weight_decay = opt.value("weight_decay", 0.0);

    if (j.contains("trainer")) {
        cfg.prox_mu = j["trainer"].value("mu", 0.0);
        cfg.max_beta = j["trainer"].value("beta", 0.0);
    }

    if (j.contains("dkd")) {
        const json& d = j["dkd"];
        cfg.dkd.steps = d.value("steps", 0);
        cfg.dkd.lr0 = d.value("lr", 0.0);
        cfg.dkd.round_decay = d.value("round_decay", 1.0);
        cfg.dkd.step_decay = d.value("step_decay", 1.0);
        cfg.dkd.batch_size = d.value("batch_size", std::size_t{0});
        cfg.dkd.warmup_rounds = d.value("warmup_rounds", 0);
        const std::string weighting = d.value("weighting", "uniform");
        if (weighting == "uniform")
            cfg.dkd.weighting = DKDConfig::Weighting::Uniform;
        else if (weighting == "proportional")
            cfg.dkd.weighting = DKDConfig::Weighting::Proportional;
        else
            throw std::invalid_argument("config: dkd.weighting must be uniform or proportional");
    }

    cfg.model = model_from_json(j.at("model"));

    const json& data = j.at("data");
    const std::string source = data.value("source", "synthetic");
    if (source == "synthetic") {
        cfg.data.source = DataConfig::Source::Synthetic;
        cfg.data.classes = data.value("classes", 10);
        cfg.data.dim = data.value("dim", 20);
        cfg.data.per_class = data.value("per_class", 500);
        cfg.data.spread = data.value("spread", 1.0);
        cfg.data.test_per_class = data.value("test_per_class", 100);
        cfg.data.data_seed = data.value("data_seed", std::uint64_t{1});
    } else if (source == "csv") {
        cfg.data.source = DataConfig::Source::Csv;
        cfg.data.train_path = data.at("train_path").get<std::string>();
        cfg.data.test_path = data.at("test_path").get<std::string>();
    } else {
        throw std::invalid_argument("config: data.source must be synthetic or csv");
    }

    const json& part = data.at("partition");
    const std::string scheme = part.at("scheme").get<std::string>();
    cfg.data.partition.clients = cfg.clients;
    if (scheme == "dirichlet") {
        cfg.data.partition.scheme = PartitionSpec::Scheme::Dirichlet;
        cfg.data.partition.alpha = part.at("alpha").get<double>();
    } else if (scheme == "classes_per_client") {
        cfg.data.partition.scheme = PartitionSpec::Scheme::ClassesPerClient;
        cfg.data.partition.classes_per_client = part.at("count").get<int>();
    } else if (scheme == "multi_source") {
        cfg.data.partition.scheme = PartitionSpec::Scheme::MultiSource;
        cfg.data.partition.sources = part.at("sources").get<int>();
    } else {
        throw std::invalid_argument("config: unknown partition scheme '" + scheme + "'");
    }
    if (part.contains("seed") && !part["seed"].is_null()) {
        cfg.data.partition.seed = part["seed"].get<std::uint64_t>();
        cfg.data.partition_seed_set = true;
    }

    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["schema_version"] = kConfigSchemaVersion;
    j["algorithm"] = algorithm_name(cfg.algorithm);
    j["seed"] = cfg.seed;
    j["clients"] = cfg.clients;
    j["client_fraction"] = cfg.client_fraction;
    j["rounds"] = cfg.rounds;
    j["local_epochs"] = cfg.local_epochs;
    j["batch_size"] = cfg.batch_size;
    j["validation_fraction"] = cfg.validation_fraction;
    if (cfg.target_accuracy) j["target_accuracy"] = *cfg.target_accuracy;
    json opt;
    opt["type"] = cfg.optimizer.type == OptimizerConfig::Type::Sgd ? "sgd" : "adam";
    opt["lr"] = cfg.optimizer.lr0;
    opt["lr_round_decay"] = cfg.optimizer.lr_round_decay;
    if (cfg.optimizer.type == OptimizerConfig::Type::Sgd) {
        opt["momentum"] = cfg.optimizer.momentum;
    } else {
        opt["beta1"] = cfg.optimizer.beta1;
        opt["beta2"] = cfg.optimizer.beta2;
        opt["eps"] = cfg.optimizer.eps;
    }
    opt["weight_decay"] = cfg.optimizer.weight_decay;
    j["optimizer"] = opt;
    j["trainer"] = {{"mu", cfg.prox_mu}, {"beta", cfg.max_beta}};
    j["dkd"] = {{"steps", cfg.dkd.steps},
                {"lr", cfg.dkd.lr0},
                {"round_decay", cfg.dkd.round_decay},
                {"step_decay", cfg.dkd.step_decay},
                {"batch_size", cfg.dkd.batch_size},
                {"warmup_rounds", cfg.dkd.warmup_rounds},
                {"weighting",
                 cfg.dkd.weighting == DKDConfig::Weighting::Uniform ? "uniform" : "proportional"}};
    j["model"] = model_to_json(cfg.model);
    json data;
    if (cfg.data.source == DataConfig::Source::Synthetic) {
        data["source"] = "synthetic";
        data["classes"] = cfg.data.classes;
        data["dim"] = cfg.data.dim;
        data["per_class"] = cfg.data.per_class;
        data["spread"] = cfg.data.spread;
        data["test_per_class"] = cfg.data.test_per_class;
        data["data_seed"] = cfg.data.data_seed;
    } else {
        data["source"] = "csv";
        data["train_path"] = cfg.data.train_path;
        data["test_path"] = cfg.data.test_path;
    }
    json part;
    switch (cfg.data.partition.scheme) {
        case PartitionSpec::Scheme::Dirichlet:
            part["scheme"] = "dirichlet";
            part["alpha"] = cfg.data.partition.alpha;
            break;
        case PartitionSpec::Scheme::ClassesPerClient:
            part["scheme"] = "classes_per_client";
            part["count"] = cfg.data.partition.classes_per_client;
            break;
        case PartitionSpec::Scheme::MultiSource:
            part["scheme"] = "multi_source";
            part["sources"] = cfg.data.partition.sources;
            break;
    }
    if (cfg.data.partition_seed_set) part["seed"] = cfg.data.partition.seed;
    data["partition"] = part;
    j["data"] = data;
    return j.dump(2) + "\n";
}

}  // namespace feddkd
