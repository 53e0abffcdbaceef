#include "feddkd/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace feddkd {

namespace {

void require_logits(const Tensor& t, const char* what) {
    if (t.rank() != 2) throw std::invalid_argument(std::string(what) + ": expected [B,C] logits");
    t.require_finite(what);
}

// Writes row-wise log-softmax of src into dst (may alias).
void log_softmax_rows(const Tensor& src, Tensor& dst, double temperature) {
    const std::size_t b = src.rows(), c = src.cols();
    for (std::size_t i = 0; i < b; ++i) {
        const double* in = &src.data()[i * c];
        double* out = &dst.data()[i * c];
        double mx = in[0] / temperature;
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, in[j] / temperature);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) sum += std::exp(in[j] / temperature - mx);
        const double log_sum = std::log(sum);
        for (std::size_t j = 0; j < c; ++j) out[j] = in[j] / temperature - mx - log_sum;
    }
}

}  // namespace

Tensor softmax(const Tensor& logits) {
    require_logits(logits, "softmax");
    Tensor out = logits;
    log_softmax_rows(logits, out, 1.0);
    for (double& v : out.data()) v = std::exp(v);
    return out;
}

Tensor log_softmax(const Tensor& logits) {
    require_logits(logits, "log_softmax");
    Tensor out = logits;
    log_softmax_rows(logits, out, 1.0);
    return out;
}

double soft_cross_entropy(const Tensor& teacher_logits, const Tensor& student_logits,
                          double temperature) {
    require_logits(teacher_logits, "soft_cross_entropy");
    require_logits(student_logits, "soft_cross_entropy");
    if (!teacher_logits.same_shape(student_logits))
        throw std::invalid_argument("soft_cross_entropy: teacher/student shape mismatch");
    if (temperature <= 0.0)
        throw std::invalid_argument("soft_cross_entropy: temperature must be positive");

    const std::size_t b = teacher_logits.rows(), c = teacher_logits.cols();
    Tensor t_log = teacher_logits, s_log = student_logits;
    log_softmax_rows(teacher_logits, t_log, temperature);
    log_softmax_rows(student_logits, s_log, temperature);

    double total = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        const double* tl = &t_log.data()[i * c];
        const double* sl = &s_log.data()[i * c];
        double row = 0.0;
        for (std::size_t j = 0; j < c; ++j) row -= std::exp(tl[j]) * sl[j];
        total += row;
    }
    return total / static_cast<double>(b);
}

Tensor soft_cross_entropy_grad(const Tensor& teacher_logits, const Tensor& student_logits) {
    if (!teacher_logits.same_shape(student_logits))
        throw std::invalid_argument("soft_cross_entropy_grad: shape mismatch");
    Tensor grad = softmax(student_logits);
    const Tensor teacher_probs = softmax(teacher_logits);
    const double inv_b = 1.0 / static_cast<double>(grad.rows());
    for (std::size_t i = 0; i < grad.size(); ++i)
        grad[i] = (grad[i] - teacher_probs[i]) * inv_b;
    return grad;
}

double kl_raw(const double* p, const double* q, std::size_t n) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (p[i] > 0.0) sum += p[i] * std::log(p[i] / std::max(q[i], kProbFloor));
    }
    // Exact KL is nonnegative; flooring q and summation rounding can leave a
    // tiny negative residue.
    return std::max(sum, 0.0);
}

double total_variation_raw(const double* p, const double* q, std::size_t n) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += std::abs(p[i] - q[i]);
    return 0.5 * sum;
}

double entropy_raw(const double* p, std::size_t n) {
    double h = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
    return h;
}

double kl_divergence(const Distribution& p, const Distribution& q) {
    if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: dimension mismatch");
    return kl_raw(p.probs().data(), q.probs().data(), p.size());
}

double total_variation(const Distribution& p, const Distribution& q) {
    if (p.size() != q.size()) throw std::invalid_argument("total_variation: dimension mismatch");
    return total_variation_raw(p.probs().data(), q.probs().data(), p.size());
}

double entropy(const Distribution& p) { return entropy_raw(p.probs().data(), p.size()); }

}  // namespace feddkd
