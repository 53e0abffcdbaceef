#pragma once

#include <vector>

#include "feddkd/data.hpp"
#include "feddkd/model.hpp"
#include "feddkd/rng.hpp"
#include "feddkd/tensor.hpp"

namespace feddkd::test {

/// Random distribution drawn from Dir(alpha); spikier for small alpha.
inline Distribution random_distribution(Rng& rng, std::size_t classes, double alpha) {
    return Distribution(rng.dirichlet(alpha, classes));
}

inline Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    Tensor t({rows, cols});
    for (double& v : t.data()) v = scale * rng.normal();
    return t;
}

/// Small random labeled dataset with the given geometry.
inline Dataset random_dataset(Rng& rng, std::size_t n, std::size_t dim, int classes) {
    Dataset ds;
    ds.num_classes = classes;
    ds.features = random_matrix(rng, n, dim);
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        ds.labels[i] = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(classes)));
    return ds;
}

/// Largest |a - b| over all tensor values of two congruent sets.
inline double max_abs_difference(const ParamSet& a, const ParamSet& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.layers.size(); ++i)
        for (std::size_t j = 0; j < a.layers[i].size(); ++j) {
            const Tensor& ta = a.layers[i][j].value;
            const Tensor& tb = b.layers[i][j].value;
            for (std::size_t n = 0; n < ta.size(); ++n)
                worst = std::max(worst, std::abs(ta[n] - tb[n]));
        }
    return worst;
}

/// Perturb every value with iid gaussian noise (to move off init structure).
inline void jitter_params(ParamSet& params, Rng& rng, double scale) {
    params.for_each_tensor([&](ParamTensor& t) {
        if (t.name == "bn_running_var") {
            for (double& v : t.value.data()) v = std::abs(v + scale * rng.normal()) + 0.05;
        } else {
            for (double& v : t.value.data()) v += scale * rng.normal();
        }
    });
}

}  // namespace feddkd::test
