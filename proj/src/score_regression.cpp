#include "ccfpca/score_regression.hpp"

#include "ccfpca/error.hpp"

#include <cmath>
#include <limits>

namespace ccfpca {

ScoreRegressor::ScoreRegressor(std::vector<double> xs, ScoreMatrix scores, KernelSpec kernel)
  : xs_(std::move(xs))
  , scores_(std::move(scores))
  , kernel_(kernel)
{
  if (xs_.size() != scores_.rows()) {
    throw ValidationError("score regression: " + std::to_string(xs_.size()) +
                          " covariates for " + std::to_string(scores_.rows()) + " score rows");
  }
}

std::vector<double> ScoreRegressor::eval_alpha(double x) const
{
  const auto w = nw_weights(x, xs_, kernel_);
  if (w.degenerate) {
    throw NumericalError("degenerate regression weights at x = " + format_double(x) +
                         "; increase the score-regression bandwidth");
  }
  std::vector<double> alpha(scores_.cols(), 0.0);
  for (std::size_t i = 0; i < xs_.size(); ++i) {
    if (w.w[i] == 0.0) {
      continue;
    }
    for (std::size_t k = 0; k < alpha.size(); ++k) {
      alpha[k] += w.w[i] * scores_.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    }
  }
  return alpha;
}

std::vector<double> eval_alpha(const ScoreRegressor& r, double x)
{
  return r.eval_alpha(x);
}

double loo_cv_error(std::span<const double> xs, const ScoreMatrix& scores, const KernelSpec& kernel)
{
  const auto n = xs.size();
  const auto K = scores.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double wsum = 0.0;
    std::vector<double> pred(K, 0.0);
    for (std::size_t l = 0; l < n; ++l) {
      if (l == i) {
        continue;
      }
      const double w = kernel.profile((xs[i] - xs[l]) / kernel.bandwidth);
      if (w == 0.0) {
        continue;
      }
      wsum += w;
      for (std::size_t k = 0; k < K; ++k) {
        pred[k] += w * scores.values(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k));
      }
    }
    if (!(wsum > 0.0)) {
      return std::numeric_limits<double>::infinity();
    }
    for (std::size_t k = 0; k < K; ++k) {
      const double r =
        scores.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) - pred[k] / wsum;
      total += r * r;
    }
  }
  return total;
}

double cv_bandwidth(std::span<const double> xs, const ScoreMatrix& scores, KernelFamily family,
                    std::span<const double> candidates)
{
  if (candidates.empty()) {
    throw ValidationError("cv_bandwidth: empty candidate grid");
  }
  if (xs.size() != scores.rows()) {
    throw ValidationError("cv_bandwidth: covariate and score lengths differ");
  }
  for (double h : candidates) {
    if (!(h > 0.0)) {
      throw ValidationError("cv_bandwidth: candidates must be positive");
    }
  }
  if (candidates.size() == 1) {
    return candidates.front();
  }
  std::vector<double> err(candidates.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(candidates.size()); ++c) {
    err[c] = loo_cv_error(xs, scores, KernelSpec{family, candidates[c]});
  }
  // Errors within rounding of each other (relative to the score energy) tie.
  const double tol = 1e-12 * scores.values.squaredNorm();
  std::size_t best = 0;
  for (std::size_t c = 1; c < candidates.size(); ++c) {
    const bool tie = std::abs(err[c] - err[best]) <= tol ||
                     (std::isinf(err[c]) && std::isinf(err[best]));
    if ((!tie && err[c] < err[best]) || (tie && candidates[c] < candidates[best])) {
      best = c;
    }
  }
  return candidates[best];
}

} // namespace ccfpca
