#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace feddkd {

/// Dense row-major tensor of 64-bit floats. The universal value carrier:
/// batches, logits, parameters and gradients are all Tensors.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    static Tensor vector(std::size_t n, double fill = 0.0);
    static Tensor from_values(std::vector<std::size_t> shape, std::vector<double> values);
    static Tensor identity(std::size_t n);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    std::size_t rank() const { return shape_.size(); }

    // 2-D accessors; throw unless rank() == 2.
    std::size_t rows() const;
    std::size_t cols() const;
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    void require_finite(const std::string& what) const;

    void fill(double value);
    Tensor& scale(double s);
    Tensor& add_scaled(const Tensor& other, double s);  // *this += s * other
    double squared_norm() const;

    bool operator==(const Tensor& other) const = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

// y[B,N] = x[B,M] * w[M,N]
Tensor matmul(const Tensor& x, const Tensor& w);
// y[M,N] = a[B,M]^T * b[B,N]
Tensor matmul_transpose_a(const Tensor& a, const Tensor& b);
// y[B,M] = a[B,N] * b[M,N]^T
Tensor matmul_transpose_b(const Tensor& a, const Tensor& b);

/// Probability vector over C >= 2 classes; entries nonnegative, sum 1 within 1e-9.
class Distribution {
public:
    explicit Distribution(std::vector<double> probs);
    const std::vector<double>& probs() const { return probs_; }
    std::size_t size() const { return probs_.size(); }
    double operator[](std::size_t i) const { return probs_[i]; }

private:
    std::vector<double> probs_;
};

}  // namespace feddkd
