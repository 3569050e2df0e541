#pragma once

#include <cstddef>
#include <vector>

namespace lungct {

/// Row-major batch of per-class values (B x K).
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) noexcept { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return values[r * cols + c]; }
};

struct FocalLossConfig {
  double gamma = 2.0;
  std::vector<double> alpha = {1.0, 1.0, 1.0, 1.0};

  /// Throws InvalidValue.
  void validate() const;
};

/// Probabilities are clipped to [kProbabilityEpsilon, 1 - kProbabilityEpsilon] before the log.
inline constexpr double kProbabilityEpsilon = 1e-7;

/// Mean over the batch of -sum_c y_c * alpha_c * (1 - p_c)^gamma * log(p_c).
/// Throws ShapeMismatch, NonProbabilityInput (row sum off by more than 1e-3).
double focal_loss(const Matrix& probs, const Matrix& targets, const FocalLossConfig& cfg);

/// Row-wise numerically stable softmax.
Matrix softmax(const Matrix& logits);

struct LossAndGradient {
  double loss = 0.0;
  Matrix grad;  // d loss / d logits, same shape as the logits
};

/// Focal loss of softmax(logits) with its analytic gradient with respect to
/// the pre-softmax scores. Clipped probabilities contribute zero gradient.
LossAndGradient focal_loss_with_grad(const Matrix& logits, const Matrix& targets, const FocalLossConfig& cfg);

/// Inverse-frequency class weights scaled so the largest is 1. Throws
/// EmptyClass when a class has no samples.
std::vector<double> inverse_frequency_alpha(const std::vector<std::size_t>& class_counts);

} // namespace lungct
