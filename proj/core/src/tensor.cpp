#include "feddkd/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace feddkd {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {
    for (std::size_t d : shape_) {
        if (d == 0) throw std::invalid_argument("tensor: zero dimension");
    }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
    return Tensor({rows, cols}, fill);
}

Tensor Tensor::vector(std::size_t n, double fill) { return Tensor({n}, fill); }

Tensor Tensor::from_values(std::vector<std::size_t> shape, std::vector<double> values) {
    if (shape_product(shape) != values.size())
        throw std::invalid_argument("tensor: value count does not match shape");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(values);
    return t;
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw std::logic_error("tensor: rows() on non-matrix");
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw std::logic_error("tensor: cols() on non-matrix");
    return shape_[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::require_finite(const std::string& what) const {
    if (!all_finite()) throw std::runtime_error(what + ": non-finite values");
}

void Tensor::fill(double value) {
    for (double& v : data_) v = value;
}

Tensor& Tensor::scale(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

Tensor& Tensor::add_scaled(const Tensor& other, double s) {
    if (!same_shape(other)) throw std::invalid_argument("tensor: shape mismatch in add_scaled");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * other.data_[i];
    return *this;
}

double Tensor::squared_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return s;
}

Tensor matmul(const Tensor& x, const Tensor& w) {
    if (x.rank() != 2 || w.rank() != 2 || x.cols() != w.rows())
        throw std::invalid_argument("matmul: incompatible shapes");
    const std::size_t b = x.rows(), m = x.cols(), n = w.cols();
    Tensor y({b, n});
    for (std::size_t i = 0; i < b; ++i) {
        const double* xrow = &x.data()[i * m];
        double* yrow = &y.data()[i * n];
        for (std::size_t k = 0; k < m; ++k) {
            const double xv = xrow[k];
            const double* wrow = &w.data()[k * n];
            for (std::size_t j = 0; j < n; ++j) yrow[j] += xv * wrow[j];
        }
    }
    return y;
}

Tensor matmul_transpose_a(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows())
        throw std::invalid_argument("matmul_transpose_a: incompatible shapes");
    const std::size_t batch = a.rows(), m = a.cols(), n = b.cols();
    Tensor y({m, n});
    for (std::size_t i = 0; i < batch; ++i) {
        const double* arow = &a.data()[i * m];
        const double* brow = &b.data()[i * n];
        for (std::size_t k = 0; k < m; ++k) {
            const double av = arow[k];
            double* yrow = &y.data()[k * n];
            for (std::size_t j = 0; j < n; ++j) yrow[j] += av * brow[j];
        }
    }
    return y;
}

Tensor matmul_transpose_b(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols())
        throw std::invalid_argument("matmul_transpose_b: incompatible shapes");
    const std::size_t batch = a.rows(), n = a.cols(), m = b.rows();
    Tensor y({batch, m});
    for (std::size_t i = 0; i < batch; ++i) {
        const double* arow = &a.data()[i * n];
        double* yrow = &y.data()[i * m];
        for (std::size_t k = 0; k < m; ++k) {
            const double* brow = &b.data()[k * n];
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += arow[j] * brow[j];
            yrow[k] = s;
        }
    }
    return y;
}

Distribution::Distribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.size() < 2) throw std::invalid_argument("distribution: needs at least 2 classes");
    double sum = 0.0;
    for (double p : probs_) {
        if (!std::isfinite(p) || p < 0.0)
            throw std::invalid_argument("distribution: entries must be finite and nonnegative");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("distribution: entries must sum to 1");
}

}  // namespace feddkd
