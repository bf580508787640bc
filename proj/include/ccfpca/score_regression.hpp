#pragma once

#include "ccfpca/conditional.hpp"
#include "ccfpca/fpca.hpp"

#include <span>
#include <vector>

namespace ccfpca {

//! Nadaraya-Watson regression of each score column on the covariate:
//! alpha_k(x) = sum_i w_i(x) xi_ki.
class ScoreRegressor
{
public:
  ScoreRegressor(std::vector<double> xs, ScoreMatrix scores, KernelSpec kernel);

  //! One value per score column. Throws NumericalError on degenerate weights.
  std::vector<double> eval_alpha(double x) const;

  const KernelSpec& kernel() const { return kernel_; }
  std::size_t components() const { return scores_.cols(); }

private:
  std::vector<double> xs_;
  ScoreMatrix scores_;
  KernelSpec kernel_;
};

std::vector<double> eval_alpha(const ScoreRegressor& r, double x);

//! Leave-one-out squared prediction error summed over score columns;
//! +inf when some left-out point has no neighbour within the bandwidth.
double loo_cv_error(std::span<const double> xs, const ScoreMatrix& scores, const KernelSpec& kernel);

//! Candidate with the smallest leave-one-out error; ties go to the smaller
//! bandwidth. Candidates are evaluated in parallel and reduced by index.
double cv_bandwidth(std::span<const double> xs, const ScoreMatrix& scores, KernelFamily family,
                    std::span<const double> candidates);

} // namespace ccfpca
