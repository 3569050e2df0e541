#include "lungct/focal_loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lungct/error.hpp"

namespace lungct {

namespace {

void check_shapes(const Matrix& a, const Matrix& targets, const FocalLossConfig& cfg) {
  if (a.rows != targets.rows || a.cols != targets.cols || a.values.size() != a.rows * a.cols ||
      targets.values.size() != targets.rows * targets.cols) {
    throw Error(ErrorKind::ShapeMismatch, "predictions and targets must have the same shape");
  }
  if (a.cols != cfg.alpha.size()) {
    throw Error(ErrorKind::ShapeMismatch, "alpha has " + std::to_string(cfg.alpha.size()) + " entries for " +
                                              std::to_string(a.cols) + " classes");
  }
  if (a.rows == 0) throw Error(ErrorKind::ShapeMismatch, "empty batch");
}

double clip(double p) { return std::clamp(p, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon); }

double focal_term(double p, double alpha, double gamma) {
  const double q = clip(p);
  return -alpha * std::pow(1.0 - q, gamma) * std::log(q);
}

// p * d/dp of the focal term, or 0 where clipping flattens it.
double focal_term_slope_times_p(double p, double alpha, double gamma) {
  if (p < kProbabilityEpsilon || p > 1.0 - kProbabilityEpsilon) return 0.0;
  const double one_minus = 1.0 - p;
  double slope = -std::pow(one_minus, gamma);
  if (gamma != 0.0) slope += gamma * p * std::pow(one_minus, gamma - 1.0) * std::log(p);
  return alpha * slope;
}

} // namespace

void FocalLossConfig::validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw Error(ErrorKind::InvalidValue, "gamma must be finite and >= 0");
  if (alpha.empty()) throw Error(ErrorKind::InvalidValue, "alpha must not be empty");
  for (double a : alpha) {
    if (!(a > 0.0 && a <= 1.0)) throw Error(ErrorKind::InvalidValue, "alpha entries must lie in (0,1]");
  }
}

double focal_loss(const Matrix& probs, const Matrix& targets, const FocalLossConfig& cfg) {
  check_shapes(probs, targets, cfg);
  double total = 0.0;
  for (std::size_t r = 0; r < probs.rows; ++r) {
    double row_sum = 0.0;
    for (std::size_t c = 0; c < probs.cols; ++c) row_sum += probs(r, c);
    if (!(std::abs(row_sum - 1.0) <= 1e-3)) {
      throw Error(ErrorKind::NonProbabilityInput, "row " + std::to_string(r) + " sums to " + std::to_string(row_sum));
    }
    for (std::size_t c = 0; c < probs.cols; ++c) {
      if (targets(r, c) != 0.0) total += targets(r, c) * focal_term(probs(r, c), cfg.alpha[c], cfg.gamma);
    }
  }
  return total / static_cast<double>(probs.rows);
}

Matrix softmax(const Matrix& logits) {
  Matrix out(logits.rows, logits.cols);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    double peak = logits(r, 0);
    for (std::size_t c = 1; c < logits.cols; ++c) peak = std::max(peak, logits(r, c));
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.cols; ++c) {
      out(r, c) = std::exp(logits(r, c) - peak);
      sum += out(r, c);
    }
    for (std::size_t c = 0; c < logits.cols; ++c) out(r, c) /= sum;
  }
  return out;
}

LossAndGradient focal_loss_with_grad(const Matrix& logits, const Matrix& targets, const FocalLossConfig& cfg) {
  check_shapes(logits, targets, cfg);
  const Matrix probs = softmax(logits);
  LossAndGradient out{focal_loss(probs, targets, cfg), Matrix(logits.rows, logits.cols)};
  const double scale = 1.0 / static_cast<double>(logits.rows);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    // dL/dz_j = sum_c y_c f'(p_c) p_c (delta_cj - p_j)
    double weighted = 0.0;
    for (std::size_t c = 0; c < logits.cols; ++c) {
      const double y = targets(r, c);
      if (y == 0.0) continue;
      const double g = y * focal_term_slope_times_p(probs(r, c), cfg.alpha[c], cfg.gamma);
      out.grad(r, c) += g;
      weighted += g;
    }
    for (std::size_t j = 0; j < logits.cols; ++j) {
      out.grad(r, j) = scale * (out.grad(r, j) - weighted * probs(r, j));
    }
  }
  return out;
}

std::vector<double> inverse_frequency_alpha(const std::vector<std::size_t>& class_counts) {
  if (class_counts.empty()) throw Error(ErrorKind::EmptyDataset, "no class counts");
  std::vector<double> inv;
  inv.reserve(class_counts.size());
  for (std::size_t i = 0; i < class_counts.size(); ++i) {
    if (class_counts[i] == 0) {
      throw Error(ErrorKind::EmptyClass, "class " + std::to_string(i) + " has no training samples");
    }
    inv.push_back(1.0 / static_cast<double>(class_counts[i]));
  }
  // Normalize to mean 1, then scale into (0, 1] by the maximum.
  const double mean = std::accumulate(inv.begin(), inv.end(), 0.0) / static_cast<double>(inv.size());
  for (double& a : inv) a /= mean;
  const double peak = *std::max_element(inv.begin(), inv.end());
  for (double& a : inv) a /= peak;
  return inv;
}

} // namespace lungct
