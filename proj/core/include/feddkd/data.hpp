#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "feddkd/tensor.hpp"

namespace feddkd {

/// Labeled feature matrix. Labels are dense class ids in [0, num_classes).
struct Dataset {
    Tensor features;          // [N, D]
    std::vector<int> labels;  // length N
    int num_classes = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols(); }
    void validate() const;
    Dataset subset(const std::vector<std::size_t>& indices) const;
    std::vector<std::vector<std::size_t>> indices_by_class() const;
};

/// One client's private slice of the data.
struct ClientShard {
    int client_id = 0;
    Dataset data;

    std::size_t sample_count() const { return data.size(); }
};

/// x -> matrix * x + shift, used to emulate a distinct data source.
struct AffineTransform {
    Tensor matrix;              // [D, D]
    std::vector<double> shift;  // [D]
};

/// Gaussian blobs: class c is centered on a deterministic unit direction
/// scaled by 3.0 (axis e_c for c < dim, a fixed pseudo-random direction
/// otherwise), isotropic std = spread. Deterministic per seed; the optional
/// affine transform applies to every feature row.
Dataset generate_synthetic(int classes, int dim, int per_class, double spread,
                           const AffineTransform* transform, std::uint64_t seed);

/// The unit-norm center direction used by generate_synthetic for one class.
std::vector<double> synthetic_class_direction(int class_id, int dim);

/// Per class r, draws p_r ~ Dir_K(alpha) and splits that class's indices by
/// cumulative proportions with largest-remainder rounding. Shards are disjoint
/// and cover ds. A partition leaving some client empty is re-drawn up to 100
/// times, then rejected.
std::vector<ClientShard> partition_dirichlet(const Dataset& ds, int clients, double alpha,
                                             std::uint64_t seed);

/// Each client holds a uniformly random subset of classes of the given size;
/// every class's samples are split round-robin by index over its holders.
/// Classes held by no client are reassigned to one random client.
std::vector<ClientShard> partition_classes_per_client(const Dataset& ds, int clients,
                                                      int classes_per_client, std::uint64_t seed);

/// Client k receives source k wholesale; all sources must agree on class
/// count and feature dimension.
std::vector<ClientShard> partition_multisource(const std::vector<Dataset>& sources);

/// q_k = n_k / sum n_i over the given subset of clients.
std::vector<double> compute_weights(const std::vector<std::size_t>& sample_counts);
std::vector<double> compute_weights(const std::vector<const ClientShard*>& shards);

/// Rows "label,f1,...,fD", optional single header line. Labels are remapped to
/// dense [0, C) preserving numeric order. Parse failures report line numbers.
Dataset load_csv(const std::string& path);

void write_csv(const Dataset& ds, const std::string& path);

/// Carves `fraction` of each class out of ds (stratified). Returns
/// (remainder, carved). Deterministic per seed.
std::pair<Dataset, Dataset> split_stratified(const Dataset& ds, double fraction,
                                             std::uint64_t seed);

struct PartitionSpec {
    enum class Scheme { Dirichlet, ClassesPerClient, MultiSource };
    Scheme scheme = Scheme::Dirichlet;
    int clients = 1;
    std::uint64_t seed = 0;
    double alpha = 1.0;          // Dirichlet
    int classes_per_client = 1;  // ClassesPerClient
    int sources = 1;             // MultiSource

    void validate() const;
};

/// Dispatch for the single-dataset schemes (Dirichlet / ClassesPerClient).
std::vector<ClientShard> make_partition(const Dataset& ds, const PartitionSpec& spec);

}  // namespace feddkd
