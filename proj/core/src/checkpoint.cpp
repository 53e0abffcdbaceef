#include "feddkd/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace feddkd {

namespace {
constexpr const char* kMagic = "feddkd-params";
constexpr int kVersion = 1;

const char* kind_name(LayerSpec::Kind k) {
    switch (k) {
        case LayerSpec::Kind::Dense: return "dense";
        case LayerSpec::Kind::ReLU: return "relu";
        case LayerSpec::Kind::BatchNorm: return "batch_norm";
    }
    return "?";
}
}  // namespace

void save_params(const ParamSet& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_params: cannot open " + path);
    out << kMagic << ' ' << kVersion << '\n';
    out << "layers " << params.spec.layers.size() << '\n';
    for (std::size_t i = 0; i < params.spec.layers.size(); ++i) {
        const LayerSpec& l = params.spec.layers[i];
        out << "layer " << i << ' ' << kind_name(l.kind);
        if (l.kind == LayerSpec::Kind::Dense) out << ' ' << l.in_dim << ' ' << l.out_dim;
        if (l.kind == LayerSpec::Kind::BatchNorm) out << ' ' << l.dim;
        out << '\n';
    }
    char buf[64];
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        for (const ParamTensor& t : params.layers[i]) {
            out << "tensor " << i << ' ' << t.name << ' ' << (t.is_bn ? 1 : 0) << ' '
                << (t.trainable ? 1 : 0) << ' ' << t.value.rank();
            for (std::size_t d : t.value.shape()) out << ' ' << d;
            out << '\n';
            for (std::size_t n = 0; n < t.value.size(); ++n) {
                std::snprintf(buf, sizeof(buf), "%.17g", t.value[n]);
                out << buf << (n + 1 == t.value.size() ? '\n' : ' ');
            }
        }
    }
    out << "end\n";
    if (!out) throw std::runtime_error("save_params: write failed for " + path);
}

ParamSet load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_params: cannot open " + path);
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != kMagic || version != kVersion)
        throw std::runtime_error("load_params: " + path + " is not a version-" +
                                 std::to_string(kVersion) + " checkpoint");
    std::string token;
    std::size_t n_layers = 0;
    if (!(in >> token >> n_layers) || token != "layers")
        throw std::runtime_error("load_params: malformed layer count");

    ParamSet params;
    params.spec.layers.resize(n_layers);
    params.layers.resize(n_layers);
    for (std::size_t i = 0; i < n_layers; ++i) {
        std::size_t idx = 0;
        std::string kind;
        if (!(in >> token >> idx >> kind) || token != "layer" || idx != i)
            throw std::runtime_error("load_params: malformed layer line");
        if (kind == "dense") {
            std::size_t d_in = 0, d_out = 0;
            if (!(in >> d_in >> d_out)) throw std::runtime_error("load_params: malformed dense dims");
            params.spec.layers[i] = LayerSpec::dense(d_in, d_out);
        } else if (kind == "relu") {
            params.spec.layers[i] = LayerSpec::relu();
        } else if (kind == "batch_norm") {
            std::size_t d = 0;
            if (!(in >> d)) throw std::runtime_error("load_params: malformed batch_norm dim");
            params.spec.layers[i] = LayerSpec::batch_norm(d);
        } else {
            throw std::runtime_error("load_params: unknown layer kind '" + kind + "'");
        }
    }

    while (in >> token) {
        if (token == "end") break;
        if (token != "tensor") throw std::runtime_error("load_params: expected tensor block");
        std::size_t layer = 0, rank = 0;
        std::string name;
        int is_bn = 0, trainable = 0;
        if (!(in >> layer >> name >> is_bn >> trainable >> rank) || layer >= n_layers)
            throw std::runtime_error("load_params: malformed tensor header");
        std::vector<std::size_t> shape(rank);
        for (std::size_t& d : shape)
            if (!(in >> d)) throw std::runtime_error("load_params: malformed tensor shape");
        std::vector<double> values(shape_product(shape));
        for (double& v : values)
            if (!(in >> v)) throw std::runtime_error("load_params: truncated tensor values");
        params.layers[layer].push_back(
            {name, Tensor::from_values(std::move(shape), std::move(values)), is_bn != 0,
             trainable != 0});
    }
    if (token != "end") throw std::runtime_error("load_params: missing end marker");
    params.spec.validate();
    return params;
}

}  // namespace feddkd
