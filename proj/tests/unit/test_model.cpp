#include <cmath>
#include <cstdio>
#include <filesystem>

#include <doctest.h>

#include "feddkd/checkpoint.hpp"
#include "feddkd/divergence.hpp"
#include "feddkd/model.hpp"
#include "feddkd/optim.hpp"
#include "helpers.hpp"

using namespace feddkd;

namespace {

// Per-coordinate relative error with an absolute floor; compares only
// trainable slots (running statistics carry zero gradient by contract).
double worst_gradient_error(const ParamSet& analytic, const ParamSet& numeric) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.layers.size(); ++i)
        for (std::size_t j = 0; j < analytic.layers[i].size(); ++j) {
            if (!analytic.layers[i][j].trainable) continue;
            const Tensor& a = analytic.layers[i][j].value;
            const Tensor& n = numeric.layers[i][j].value;
            for (std::size_t v = 0; v < a.size(); ++v) {
                const double denom = std::max({std::abs(a[v]), std::abs(n[v]), 1e-3});
                worst = std::max(worst, std::abs(a[v] - n[v]) / denom);
            }
        }
    return worst;
}

void check_gradients(const ModelSpec& spec, Mode mode, std::uint64_t seed) {
    Rng rng(mix_seed({seed, 77}));
    ParamSet params = init_network(spec, seed);
    test::jitter_params(params, rng, 0.3);
    const std::size_t b = 5;
    const Tensor batch = test::random_matrix(rng, b, spec.input_dim());
    const Tensor teacher = test::random_matrix(rng, b, spec.num_classes(), 2.0);

    ParamSet work = params;
    ForwardResult fwd = forward(work, batch, mode);
    const Tensor dlogits = soft_cross_entropy_grad(teacher, fwd.logits);
    const ParamSet analytic = backward(params, fwd.cache, dlogits);

    const auto loss = [&](const ParamSet& p) {
        ParamSet copy = p;
        ForwardResult r = forward(copy, batch, mode);
        return soft_cross_entropy(teacher, r.logits);
    };
    const ParamSet numeric = finite_difference_gradient(loss, params, 1e-5);

    CHECK(worst_gradient_error(analytic, numeric) < 1e-4);
    // Running-statistic slots carry exactly zero gradient.
    analytic.for_each_tensor([](const ParamTensor& t) {
        if (t.trainable) return;
        for (double v : t.value.data()) CHECK(v == 0.0);
    });
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("init gives bounded dense weights and canonical bn values") {
    ModelSpec spec{{LayerSpec::dense(4, 3), LayerSpec::batch_norm(3), LayerSpec::relu(),
                    LayerSpec::dense(3, 2)}};
    const ParamSet p = init_network(spec, 123);
    const double bound = std::sqrt(6.0 / 4.0);
    for (double v : p.layers[0][0].value.data()) {
        CHECK(v <= bound);
        CHECK(v >= -bound);
    }
    for (double v : p.layers[0][1].value.data()) CHECK(v == 0.0);
    for (double v : p.layers[1][0].value.data()) CHECK(v == 1.0);  // scale
    for (double v : p.layers[1][1].value.data()) CHECK(v == 0.0);  // shift
    for (double v : p.layers[1][2].value.data()) CHECK(v == 0.0);  // running mean
    for (double v : p.layers[1][3].value.data()) CHECK(v == 1.0);  // running var
}

TEST_CASE("init is bitwise deterministic per seed") {
    ModelSpec spec{{LayerSpec::dense(6, 5), LayerSpec::relu(), LayerSpec::dense(5, 3)}};
    CHECK(init_network(spec, 9) == init_network(spec, 9));
    CHECK(init_network(spec, 9) != init_network(spec, 10));
}

TEST_CASE("invalid specs are rejected") {
    CHECK_THROWS(ModelSpec{}.validate());
    CHECK_THROWS((ModelSpec{{LayerSpec::dense(3, 4), LayerSpec::dense(5, 2)}}).validate());
    CHECK_THROWS((ModelSpec{{LayerSpec::dense(3, 4), LayerSpec::batch_norm(3)}}).validate());
    CHECK_THROWS((ModelSpec{{LayerSpec::dense(3, 4), LayerSpec::relu()}}).validate());
    CHECK_THROWS((ModelSpec{{LayerSpec::relu(), LayerSpec::dense(3, 4)}}).validate());
}

TEST_CASE("zero network maps to uniform softmax") {
    ModelSpec spec{{LayerSpec::dense(3, 4)}};
    ParamSet p = init_network(spec, 1);
    p.for_each_tensor([](ParamTensor& t) { t.value.fill(0.0); });
    Rng rng(30);
    const Tensor batch = test::random_matrix(rng, 2, 3);
    ForwardResult r = forward(p, batch, Mode::Eval);
    for (double v : r.logits.data()) CHECK(v == 0.0);
    const Tensor probs = softmax(r.logits);
    for (double v : probs.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("eval forward is referentially transparent") {
    ModelSpec spec{{LayerSpec::dense(4, 6), LayerSpec::batch_norm(6), LayerSpec::relu(),
                    LayerSpec::dense(6, 3)}};
    ParamSet p = init_network(spec, 2);
    Rng rng(31);
    test::jitter_params(p, rng, 0.2);
    const ParamSet before = p;
    const Tensor batch = test::random_matrix(rng, 4, 4);
    const Tensor l1 = forward(p, batch, Mode::Eval).logits;
    const Tensor l2 = forward(p, batch, Mode::Eval).logits;
    CHECK(l1 == l2);
    CHECK(p == before);
}

TEST_CASE("train-mode batch norm centers the batch and updates running stats") {
    ModelSpec spec{{LayerSpec::dense(3, 4), LayerSpec::batch_norm(4), LayerSpec::dense(4, 2)}};
    ParamSet p = init_network(spec, 3);
    Rng rng(32);
    const Tensor batch = test::random_matrix(rng, 8, 3);

    // Hand-compute the expected running stats of the BN input.
    ParamSet probe = p;
    ForwardResult pre = forward(probe, batch, Mode::Train);
    const Tensor& bn_in = pre.cache.inputs[1];
    for (std::size_t c = 0; c < 4; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < 8; ++r) mean += bn_in.at(r, c);
        mean /= 8.0;
        double var = 0.0;
        for (std::size_t r = 0; r < 8; ++r) {
            const double d = bn_in.at(r, c) - mean;
            var += d * d;
        }
        var /= 8.0;
        CHECK(probe.layers[1][2].value[c] == doctest::Approx(0.1 * mean).epsilon(1e-12));
        CHECK(probe.layers[1][3].value[c] ==
              doctest::Approx(0.9 * 1.0 + 0.1 * var * 8.0 / 7.0).epsilon(1e-12));
        // normalized activations have zero mean per feature
        double norm_mean = 0.0;
        for (std::size_t r = 0; r < 8; ++r) norm_mean += pre.cache.bn[1].normalized.at(r, c);
        CHECK(std::abs(norm_mean / 8.0) < 1e-9);
    }
}

TEST_CASE("train-mode batch norm rejects singleton batches") {
    ModelSpec spec{{LayerSpec::dense(3, 4), LayerSpec::batch_norm(4), LayerSpec::dense(4, 2)}};
    ParamSet p = init_network(spec, 4);
    const Tensor one = Tensor::from_values({1, 3}, {0.1, 0.2, 0.3});
    CHECK_THROWS(forward(p, one, Mode::Train));
    CHECK_NOTHROW(forward(p, one, Mode::Eval));
}

TEST_CASE("forward rejects width mismatch") {
    ModelSpec spec{{LayerSpec::dense(3, 2)}};
    ParamSet p = init_network(spec, 5);
    CHECK_THROWS(forward(p, Tensor({2, 4}), Mode::Eval));
}

TEST_CASE("zero adjoint yields zero gradients") {
    ModelSpec spec{{LayerSpec::dense(4, 5), LayerSpec::relu(), LayerSpec::dense(5, 3)}};
    ParamSet p = init_network(spec, 6);
    Rng rng(33);
    const Tensor batch = test::random_matrix(rng, 3, 4);
    ForwardResult r = forward(p, batch, Mode::Train);
    const ParamSet g = backward(p, r.cache, Tensor({3, 3}, 0.0));
    g.for_each_tensor([](const ParamTensor& t) {
        for (double v : t.value.data()) CHECK(v == 0.0);
    });
}

TEST_CASE("backward matches finite differences across architectures and modes") {
    const ModelSpec specs[] = {
        ModelSpec{{LayerSpec::dense(5, 4)}},
        ModelSpec{{LayerSpec::dense(5, 8), LayerSpec::relu(), LayerSpec::dense(8, 4)}},
        ModelSpec{{LayerSpec::dense(5, 8), LayerSpec::batch_norm(8), LayerSpec::relu(),
                   LayerSpec::dense(8, 4)}},
        ModelSpec{{LayerSpec::dense(5, 6), LayerSpec::relu(), LayerSpec::dense(6, 6),
                   LayerSpec::batch_norm(6), LayerSpec::relu(), LayerSpec::dense(6, 3)}},
    };
    std::uint64_t seed = 100;
    for (const ModelSpec& spec : specs) {
        check_gradients(spec, Mode::Train, seed++);
        check_gradients(spec, Mode::Eval, seed++);
    }
}

TEST_CASE("backward is linear in the output adjoint") {
    ModelSpec spec{{LayerSpec::dense(4, 6), LayerSpec::relu(), LayerSpec::dense(6, 3)}};
    ParamSet p = init_network(spec, 40);
    Rng rng(34);
    const Tensor batch = test::random_matrix(rng, 3, 4);
    Tensor dlogits = test::random_matrix(rng, 3, 3);

    ForwardResult r = forward(p, batch, Mode::Eval);
    const ParamSet base = backward(p, r.cache, dlogits);

    // Duplicate every batch row and halve the adjoint: gradients must match.
    Tensor doubled({6, 4});
    Tensor half_adjoint({6, 3});
    for (std::size_t row = 0; row < 3; ++row)
        for (std::size_t rep = 0; rep < 2; ++rep) {
            for (std::size_t c = 0; c < 4; ++c) doubled.at(2 * row + rep, c) = batch.at(row, c);
            for (std::size_t c = 0; c < 3; ++c)
                half_adjoint.at(2 * row + rep, c) = 0.5 * dlogits.at(row, c);
        }
    ForwardResult r2 = forward(p, doubled, Mode::Eval);
    const ParamSet dup = backward(p, r2.cache, half_adjoint);
    CHECK(test::max_abs_difference(base, dup) < 1e-12);
}

TEST_CASE("backward rejects a cache from another architecture") {
    ModelSpec a{{LayerSpec::dense(4, 3)}};
    ModelSpec b{{LayerSpec::dense(4, 5), LayerSpec::relu(), LayerSpec::dense(5, 3)}};
    ParamSet pa = init_network(a, 1);
    ParamSet pb = init_network(b, 1);
    Rng rng(35);
    const Tensor batch = test::random_matrix(rng, 2, 4);
    ForwardResult r = forward(pa, batch, Mode::Eval);
    CHECK_THROWS(backward(pb, r.cache, Tensor({2, 3}, 0.0)));
}

TEST_CASE("penultimate adjoint matches finite differences") {
    // Loss with an activation term: soft CE + 0.5 * |penultimate|^2.
    ModelSpec spec{{LayerSpec::dense(4, 6), LayerSpec::relu(), LayerSpec::dense(6, 3)}};
    ParamSet p = init_network(spec, 41);
    Rng rng(36);
    test::jitter_params(p, rng, 0.2);
    const Tensor batch = test::random_matrix(rng, 4, 4);
    const Tensor teacher = test::random_matrix(rng, 4, 3);

    ParamSet work = p;
    ForwardResult fwd = forward(work, batch, Mode::Eval);
    const Tensor dlogits = soft_cross_entropy_grad(teacher, fwd.logits);
    Tensor extra = fwd.cache.penultimate;  // d/da of 0.5*|a|^2
    const ParamSet analytic = backward(p, fwd.cache, dlogits, &extra);

    const auto loss = [&](const ParamSet& q) {
        ParamSet copy = q;
        ForwardResult r = forward(copy, batch, Mode::Eval);
        return soft_cross_entropy(teacher, r.logits) + 0.5 * r.cache.penultimate.squared_norm();
    };
    const ParamSet numeric = finite_difference_gradient(loss, p, 1e-5);
    CHECK(worst_gradient_error(analytic, numeric) < 1e-4);
}

TEST_CASE("weighted average by hand") {
    ModelSpec spec{{LayerSpec::dense(1, 1)}};
    ParamSet a = init_network(spec, 0), b = init_network(spec, 0);
    a.layers[0][0].value[0] = 1.0;
    b.layers[0][0].value[0] = 3.0;
    ParamSet avg = weighted_average({a, b}, {0.5, 0.5}, false);
    CHECK(avg.layers[0][0].value[0] == 2.0);

    a.layers[0][0].value[0] = 0.0;
    b.layers[0][0].value[0] = 4.0;
    avg = weighted_average({a, b}, {0.25, 0.75}, false);
    CHECK(avg.layers[0][0].value[0] == 3.0);
}

TEST_CASE("weighted average of identical sets is the set itself") {
    ModelSpec spec{{LayerSpec::dense(3, 4), LayerSpec::relu(), LayerSpec::dense(4, 2)}};
    const ParamSet p = init_network(spec, 50);
    const ParamSet avg = weighted_average({p, p}, {0.25, 0.75}, false);
    CHECK(avg == p);
}

TEST_CASE("weighted average is permutation invariant") {
    ModelSpec spec{{LayerSpec::dense(3, 4), LayerSpec::relu(), LayerSpec::dense(4, 2)}};
    ParamSet a = init_network(spec, 51);
    ParamSet b = init_network(spec, 52);
    ParamSet c = init_network(spec, 53);
    const ParamSet ab = weighted_average({a, b}, {0.3, 0.7}, false);
    const ParamSet ba = weighted_average({b, a}, {0.7, 0.3}, false);
    CHECK(ab == ba);  // two terms: IEEE addition is commutative
    const ParamSet abc = weighted_average({a, b, c}, {0.2, 0.3, 0.5}, false);
    const ParamSet cab = weighted_average({c, a, b}, {0.5, 0.2, 0.3}, false);
    CHECK(test::max_abs_difference(abc, cab) < 1e-14);
}

TEST_CASE("weighted average validates weights and congruence") {
    ModelSpec spec{{LayerSpec::dense(2, 2)}};
    ParamSet a = init_network(spec, 1), b = init_network(spec, 2);
    CHECK_THROWS(weighted_average({a, b}, {0.6, 0.6}, false));
    CHECK_THROWS(weighted_average({a, b}, {0.5, -0.5}, false));
    ParamSet other = init_network(ModelSpec{{LayerSpec::dense(2, 3)}}, 1);
    CHECK_THROWS(weighted_average({a, other}, {0.5, 0.5}, false));
}

TEST_CASE("exclude_bn copies batch-norm tensors from the first set") {
    ModelSpec spec{{LayerSpec::dense(3, 4), LayerSpec::batch_norm(4), LayerSpec::dense(4, 2)}};
    ParamSet a = init_network(spec, 60);
    ParamSet b = init_network(spec, 61);
    Rng rng(37);
    test::jitter_params(a, rng, 0.5);
    test::jitter_params(b, rng, 0.5);
    const ParamSet avg = weighted_average({a, b}, {0.5, 0.5}, true);
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(avg.layers[1][j].value == a.layers[1][j].value);  // bitwise
    // non-BN tensors really are averaged
    CHECK(avg.layers[0][0].value[0] ==
          doctest::Approx(0.5 * (a.layers[0][0].value[0] + b.layers[0][0].value[0])));
}

TEST_CASE("checkpoint round-trips bitwise") {
    ModelSpec spec{{LayerSpec::dense(4, 6), LayerSpec::batch_norm(6), LayerSpec::relu(),
                    LayerSpec::dense(6, 3)}};
    ParamSet p = init_network(spec, 70);
    Rng rng(38);
    test::jitter_params(p, rng, 0.37);
    const std::string path =
        (std::filesystem::temp_directory_path() / "feddkd_ckpt_test.txt").string();
    save_params(p, path);
    const ParamSet loaded = load_params(path);
    CHECK(loaded == p);
    std::filesystem::remove(path);
}

TEST_SUITE_END();
