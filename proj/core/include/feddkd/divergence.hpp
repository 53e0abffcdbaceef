#pragma once

#include "feddkd/tensor.hpp"

namespace feddkd {

/// Probability floor used whenever a log of a (possibly zero) probability is
/// taken. Shared by kl_divergence, cross-entropy losses and their tests.
inline constexpr double kProbFloor = 1e-12;

/// Row-wise softmax of a [B,C] logit matrix, stabilized by row-max subtraction.
/// Throws on non-finite input. Each output row is a valid distribution.
Tensor softmax(const Tensor& logits);

/// Row-wise log-softmax, same stabilization.
Tensor log_softmax(const Tensor& logits);

/// Mean over the batch of -sum_c softmax(teacher)_c * log_softmax(student)_c.
/// The distillation loss: teacher rows act as soft targets. `temperature`
/// divides both logit sets before the softmaxes (default 1 = none).
double soft_cross_entropy(const Tensor& teacher_logits, const Tensor& student_logits,
                          double temperature = 1.0);

/// d/d(student_logits) of soft_cross_entropy at temperature 1:
/// (softmax(student) - softmax(teacher)) / B.
Tensor soft_cross_entropy_grad(const Tensor& teacher_logits, const Tensor& student_logits);

/// KL(p || q) with q floored at kProbFloor; zero p entries contribute nothing.
/// Tiny negative rounding residue is clamped to 0.
double kl_divergence(const Distribution& p, const Distribution& q);

/// Total variation distance: half the L1 distance, in [0, 1].
double total_variation(const Distribution& p, const Distribution& q);

/// Shannon entropy of p in nats.
double entropy(const Distribution& p);

// Span-style internals shared with the model/fed hot paths.
double kl_raw(const double* p, const double* q, std::size_t n);
double total_variation_raw(const double* p, const double* q, std::size_t n);
double entropy_raw(const double* p, std::size_t n);

}  // namespace feddkd
