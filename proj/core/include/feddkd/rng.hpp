#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace feddkd {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Collapse (seed, client, round, purpose) style tuples into one stream seed.
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x6A09E667F3BCC909ULL;
    for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
    return h;
}

/// Deterministic random stream. Wraps std::mt19937_64 (whose raw output is
/// pinned by the standard) and hand-rolls every distribution so draws are
/// byte-identical across platforms and standard-library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Multiply-shift; bias is ~n/2^64.
    std::size_t uniform_index(std::size_t n) {
        if (n == 0) throw std::invalid_argument("rng: uniform_index(0)");
        return static_cast<std::size_t>(
            (static_cast<unsigned __int128>(gen_()) * n) >> 64);
    }

    /// Standard normal via Box-Muller (two uniforms per draw, no caching).
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    /// Gamma(alpha, 1) via Marsaglia-Tsang; alpha < 1 boosted through alpha+1.
    double gamma(double alpha) {
        if (alpha <= 0.0) throw std::invalid_argument("rng: gamma needs alpha > 0");
        if (alpha < 1.0) {
            double u = uniform();
            while (u <= 0.0) u = uniform();
            return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
        }
        const double d = alpha - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    /// One draw from Dir_k(alpha): normalized iid Gamma(alpha) variates.
    std::vector<double> dirichlet(double alpha, std::size_t k) {
        std::vector<double> g(k);
        double sum = 0.0;
        for (double& v : g) {
            v = gamma(alpha);
            sum += v;
        }
        if (sum <= 0.0) {  // total underflow; fall back to the simplex center
            for (double& v : g) v = 1.0 / static_cast<double>(k);
            return g;
        }
        for (double& v : g) v /= sum;
        return g;
    }

    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(values[i - 1], values[j]);
        }
    }

    /// k distinct indices from [0, n), uniform without replacement, ascending.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
        if (k > n) throw std::invalid_argument("rng: sample_indices k > n");
        std::vector<std::size_t> pool(n);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t j = i + uniform_index(n - i);
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        std::sort(pool.begin(), pool.end());
        return pool;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace feddkd
