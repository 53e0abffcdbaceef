#include "feddkd/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "feddkd/rng.hpp"

namespace feddkd {

void Dataset::validate() const {
    if (labels.empty()) throw std::invalid_argument("dataset: empty");
    if (features.rank() != 2 || features.rows() != labels.size())
        throw std::invalid_argument("dataset: features/labels size mismatch");
    if (num_classes < 2) throw std::invalid_argument("dataset: needs at least 2 classes");
    for (int y : labels)
        if (y < 0 || y >= num_classes)
            throw std::invalid_argument("dataset: label out of range");
    features.require_finite("dataset features");
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
    if (indices.empty()) throw std::invalid_argument("dataset: empty subset");
    Dataset out;
    out.num_classes = num_classes;
    out.features = Tensor({indices.size(), dim()});
    out.labels.reserve(indices.size());
    for (std::size_t row = 0; row < indices.size(); ++row) {
        const std::size_t src = indices[row];
        if (src >= size()) throw std::out_of_range("dataset: subset index out of range");
        for (std::size_t c = 0; c < dim(); ++c) out.features.at(row, c) = features.at(src, c);
        out.labels.push_back(labels[src]);
    }
    return out;
}

std::vector<std::vector<std::size_t>> Dataset::indices_by_class() const {
    std::vector<std::vector<std::size_t>> by_class(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    return by_class;
}

std::vector<double> synthetic_class_direction(int class_id, int dim) {
    std::vector<double> dir(dim, 0.0);
    if (class_id < dim) {
        dir[class_id] = 1.0;
        return dir;
    }
    // Beyond the axis count: fixed pseudo-random unit vectors, independent of
    // the dataset seed so every seed shares one task geometry.
    Rng rng(mix_seed({0xD12EC7ULL, static_cast<std::uint64_t>(class_id)}));
    double norm = 0.0;
    while (norm < 1e-12) {
        for (double& v : dir) v = rng.normal();
        norm = std::sqrt(std::inner_product(dir.begin(), dir.end(), dir.begin(), 0.0));
    }
    for (double& v : dir) v /= norm;
    return dir;
}

Dataset generate_synthetic(int classes, int dim, int per_class, double spread,
                           const AffineTransform* transform, std::uint64_t seed) {
    if (classes < 2) throw std::invalid_argument("generate_synthetic: needs >= 2 classes");
    if (per_class < 1) throw std::invalid_argument("generate_synthetic: needs >= 1 per class");
    if (dim < 1) throw std::invalid_argument("generate_synthetic: needs dim >= 1");
    if (spread < 0.0) throw std::invalid_argument("generate_synthetic: negative spread");

    const std::size_t n = static_cast<std::size_t>(classes) * per_class;
    Dataset ds;
    ds.num_classes = classes;
    ds.features = Tensor({n, static_cast<std::size_t>(dim)});
    ds.labels.resize(n);

    Rng rng(mix_seed({seed, 0xB10B5ULL}));
    std::size_t row = 0;
    for (int c = 0; c < classes; ++c) {
        const std::vector<double> dir = synthetic_class_direction(c, dim);
        for (int s = 0; s < per_class; ++s, ++row) {
            ds.labels[row] = c;
            for (int d = 0; d < dim; ++d)
                ds.features.at(row, d) = 3.0 * dir[d] + spread * rng.normal();
        }
    }

    if (transform != nullptr) {
        if (transform->matrix.rank() != 2 ||
            transform->matrix.rows() != static_cast<std::size_t>(dim) ||
            transform->matrix.cols() != static_cast<std::size_t>(dim) ||
            transform->shift.size() != static_cast<std::size_t>(dim))
            throw std::invalid_argument("generate_synthetic: transform dimension mismatch");
        Tensor mapped = matmul(ds.features, transform->matrix);  // rows are x^T A^T with A^T = matrix
        for (std::size_t r = 0; r < n; ++r)
            for (int d = 0; d < dim; ++d) mapped.at(r, d) += transform->shift[d];
        ds.features = std::move(mapped);
    }
    return ds;
}

namespace {

std::vector<std::size_t> largest_remainder_counts(std::size_t total,
                                                  const std::vector<double>& proportions) {
    const std::size_t k = proportions.size();
    std::vector<std::size_t> counts(k, 0);
    std::vector<std::pair<double, std::size_t>> remainders(k);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const double target = proportions[i] * static_cast<double>(total);
        counts[i] = static_cast<std::size_t>(std::floor(target));
        remainders[i] = {target - std::floor(target), i};
        assigned += counts[i];
    }
    // Hand the leftovers to the largest fractional parts; ties to the lowest
    // index for determinism.
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < total; ++i, ++assigned) counts[remainders[i].second] += 1;
    return counts;
}

std::vector<ClientShard> shards_from_assignment(const Dataset& ds,
                                                const std::vector<std::vector<std::size_t>>& per_client) {
    std::vector<ClientShard> shards;
    shards.reserve(per_client.size());
    for (std::size_t k = 0; k < per_client.size(); ++k) {
        ClientShard shard;
        shard.client_id = static_cast<int>(k);
        shard.data = ds.subset(per_client[k]);
        shards.push_back(std::move(shard));
    }
    return shards;
}

}  // namespace

std::vector<ClientShard> partition_dirichlet(const Dataset& ds, int clients, double alpha,
                                             std::uint64_t seed) {
    ds.validate();
    if (clients < 1) throw std::invalid_argument("partition_dirichlet: needs >= 1 client");
    if (alpha <= 0.0) throw std::invalid_argument("partition_dirichlet: alpha must be positive");
    const auto by_class = ds.indices_by_class();
    for (int c = 0; c < ds.num_classes; ++c)
        if (by_class[c].empty())
            throw std::invalid_argument("partition_dirichlet: class " + std::to_string(c) +
                                        " has no samples");

    const std::size_t k = static_cast<std::size_t>(clients);
    for (int attempt = 0; attempt < 100; ++attempt) {
        Rng rng(mix_seed({seed, 0xD112ULL, static_cast<std::uint64_t>(attempt)}));
        std::vector<std::vector<std::size_t>> per_client(k);
        for (int c = 0; c < ds.num_classes; ++c) {
            const std::vector<double> p = rng.dirichlet(alpha, k);
            const std::vector<std::size_t> counts = largest_remainder_counts(by_class[c].size(), p);
            std::size_t cursor = 0;
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t j = 0; j < counts[i]; ++j)
                    per_client[i].push_back(by_class[c][cursor++]);
        }
        const bool any_empty = std::any_of(per_client.begin(), per_client.end(),
                                           [](const auto& v) { return v.empty(); });
        if (!any_empty) return shards_from_assignment(ds, per_client);
    }
    throw std::runtime_error(
        "partition_dirichlet: degenerate partition (a client stayed empty after 100 retries)");
}

std::vector<ClientShard> partition_classes_per_client(const Dataset& ds, int clients,
                                                      int classes_per_client, std::uint64_t seed) {
    ds.validate();
    if (clients < 1) throw std::invalid_argument("partition_classes_per_client: needs >= 1 client");
    if (classes_per_client < 1 || classes_per_client > ds.num_classes)
        throw std::invalid_argument("partition_classes_per_client: class count out of range");

    Rng rng(mix_seed({seed, 0xC7A55ULL}));
    const std::size_t c_total = static_cast<std::size_t>(ds.num_classes);
    std::vector<std::vector<std::size_t>> holders(c_total);
    for (int k = 0; k < clients; ++k) {
        const auto chosen = rng.sample_indices(c_total, static_cast<std::size_t>(classes_per_client));
        for (std::size_t c : chosen) holders[c].push_back(static_cast<std::size_t>(k));
    }
    for (std::size_t c = 0; c < c_total; ++c)
        if (holders[c].empty()) holders[c].push_back(rng.uniform_index(static_cast<std::size_t>(clients)));

    const auto by_class = ds.indices_by_class();
    std::vector<std::vector<std::size_t>> per_client(clients);
    for (std::size_t c = 0; c < c_total; ++c) {
        const auto& owner = holders[c];
        for (std::size_t i = 0; i < by_class[c].size(); ++i)
            per_client[owner[i % owner.size()]].push_back(by_class[c][i]);
    }
    // A client whose chosen classes are all absent from ds would come up
    // empty; fold the guarantee into an explicit check.
    for (int k = 0; k < clients; ++k)
        if (per_client[k].empty())
            throw std::runtime_error("partition_classes_per_client: client " + std::to_string(k) +
                                     " received no samples");
    return shards_from_assignment(ds, per_client);
}

std::vector<ClientShard> partition_multisource(const std::vector<Dataset>& sources) {
    if (sources.empty()) throw std::invalid_argument("partition_multisource: no sources");
    for (const Dataset& s : sources) {
        s.validate();
        if (s.num_classes != sources.front().num_classes || s.dim() != sources.front().dim())
            throw std::invalid_argument(
                "partition_multisource: sources disagree on classes or feature dim");
    }
    std::vector<ClientShard> shards;
    shards.reserve(sources.size());
    for (std::size_t k = 0; k < sources.size(); ++k)
        shards.push_back({static_cast<int>(k), sources[k]});
    return shards;
}

std::vector<double> compute_weights(const std::vector<std::size_t>& sample_counts) {
    if (sample_counts.empty()) throw std::invalid_argument("compute_weights: empty subset");
    double total = 0.0;
    for (std::size_t n : sample_counts) {
        if (n == 0) throw std::invalid_argument("compute_weights: empty client");
        total += static_cast<double>(n);
    }
    std::vector<double> q;
    q.reserve(sample_counts.size());
    for (std::size_t n : sample_counts) q.push_back(static_cast<double>(n) / total);
    return q;
}

std::vector<double> compute_weights(const std::vector<const ClientShard*>& shards) {
    std::vector<std::size_t> counts;
    counts.reserve(shards.size());
    for (const ClientShard* s : shards) counts.push_back(s->sample_count());
    return compute_weights(counts);
}

namespace {

bool parse_double(const std::string& field, double& out) {
    if (field.empty()) return false;
    std::size_t used = 0;
    try {
        out = std::stod(field, &used);
    } catch (const std::exception&) {
        return false;
    }
    return used == field.size();
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open " + path);

    std::vector<std::vector<double>> rows;
    std::vector<long long> raw_labels;
    std::size_t width = 0;
    std::string line;
    std::size_t line_no = 0;
    bool first_data_line = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_fields(line);
        std::vector<double> values(fields.size());
        bool numeric = true;
        for (std::size_t i = 0; i < fields.size() && numeric; ++i)
            numeric = parse_double(fields[i], values[i]);
        if (!numeric) {
            if (first_data_line) {
                first_data_line = false;  // single optional header line
                continue;
            }
            throw std::runtime_error("load_csv: " + path + " line " + std::to_string(line_no) +
                                     ": non-numeric field");
        }
        first_data_line = false;
        if (fields.size() < 2)
            throw std::runtime_error("load_csv: " + path + " line " + std::to_string(line_no) +
                                     ": need a label and at least one feature");
        if (width == 0) width = fields.size();
        if (fields.size() != width)
            throw std::runtime_error("load_csv: " + path + " line " + std::to_string(line_no) +
                                     ": ragged row (expected " + std::to_string(width) +
                                     " fields, got " + std::to_string(fields.size()) + ")");
        const double label = values[0];
        if (std::abs(label - std::llround(label)) > 1e-9)
            throw std::runtime_error("load_csv: " + path + " line " + std::to_string(line_no) +
                                     ": non-integer label");
        raw_labels.push_back(std::llround(label));
        rows.emplace_back(values.begin() + 1, values.end());
    }
    if (rows.empty()) throw std::runtime_error("load_csv: " + path + ": no data rows");

    std::vector<long long> distinct = raw_labels;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 2) throw std::runtime_error("load_csv: " + path + ": fewer than 2 classes");

    Dataset ds;
    ds.num_classes = static_cast<int>(distinct.size());
    ds.features = Tensor({rows.size(), width - 1});
    ds.labels.resize(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto it = std::lower_bound(distinct.begin(), distinct.end(), raw_labels[r]);
        ds.labels[r] = static_cast<int>(it - distinct.begin());
        for (std::size_t c = 0; c + 1 < width; ++c) ds.features.at(r, c) = rows[r][c];
    }
    ds.validate();
    return ds;
}

void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_csv: cannot open " + path);
    char buf[64];
    for (std::size_t r = 0; r < ds.size(); ++r) {
        out << ds.labels[r];
        for (std::size_t c = 0; c < ds.dim(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", ds.features.at(r, c));
            out << ',' << buf;
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write_csv: write failed for " + path);
}

std::pair<Dataset, Dataset> split_stratified(const Dataset& ds, double fraction,
                                             std::uint64_t seed) {
    ds.validate();
    if (fraction < 0.0 || fraction > 0.5)
        throw std::invalid_argument("split_stratified: fraction must be in [0, 0.5]");
    Rng rng(mix_seed({seed, 0x5717ULL}));
    std::vector<std::size_t> keep, carved;
    for (auto& cls : ds.indices_by_class()) {
        rng.shuffle(cls);
        const std::size_t take = static_cast<std::size_t>(
            std::floor(fraction * static_cast<double>(cls.size()) + 0.5));
        for (std::size_t i = 0; i < cls.size(); ++i)
            (i < take ? carved : keep).push_back(cls[i]);
    }
    std::sort(keep.begin(), keep.end());
    std::sort(carved.begin(), carved.end());
    if (keep.empty()) throw std::invalid_argument("split_stratified: nothing left after split");
    Dataset rest = ds.subset(keep);
    Dataset out_carved = carved.empty() ? Dataset{} : ds.subset(carved);
    if (!carved.empty()) out_carved.num_classes = ds.num_classes;
    rest.num_classes = ds.num_classes;
    return {std::move(rest), std::move(out_carved)};
}

void PartitionSpec::validate() const {
    if (clients < 1) throw std::invalid_argument("partition spec: needs >= 1 client");
    switch (scheme) {
        case Scheme::Dirichlet:
            if (alpha <= 0.0) throw std::invalid_argument("partition spec: alpha must be positive");
            break;
        case Scheme::ClassesPerClient:
            if (classes_per_client < 1)
                throw std::invalid_argument("partition spec: classes_per_client must be >= 1");
            break;
        case Scheme::MultiSource:
            if (sources < 1) throw std::invalid_argument("partition spec: needs >= 1 source");
            break;
    }
}

std::vector<ClientShard> make_partition(const Dataset& ds, const PartitionSpec& spec) {
    spec.validate();
    switch (spec.scheme) {
        case PartitionSpec::Scheme::Dirichlet:
            return partition_dirichlet(ds, spec.clients, spec.alpha, spec.seed);
        case PartitionSpec::Scheme::ClassesPerClient:
            return partition_classes_per_client(ds, spec.clients, spec.classes_per_client,
                                                spec.seed);
        case PartitionSpec::Scheme::MultiSource:
            throw std::invalid_argument("make_partition: multi-source takes explicit datasets");
    }
    throw std::logic_error("make_partition: unknown scheme");
}

}  // namespace feddkd
