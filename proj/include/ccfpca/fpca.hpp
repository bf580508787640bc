#pragma once

#include "ccfpca/grid.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ccfpca {

enum class TrajectoryMode
{
  //! Trajectories are kernel-weighted copula estimates at each X_i.
  Estimated,
  //! Trajectories injected from a simulator with known truth.
  Oracle,
};

//! n random surfaces C_{X_i} on a shared grid, paired with their covariates.
struct TrajectoryEnsemble
{
  std::vector<double> xs;
  std::vector<GridFunction> trajs;
  TrajectoryMode mode = TrajectoryMode::Estimated;

  std::size_t size() const { return trajs.size(); }
  const Grid2D& grid() const;
  //! Lengths agree, at least one trajectory, one shared grid.
  void validate() const;
  //! Pointwise average of the trajectories.
  GridFunction average() const;
};

//! Kernel gamma(u, v) of an integral operator on L2([0,1]^2), sampled at
//! every pair of grid nodes. Entry (p, q) pairs flat node indices.
class CovarianceField
{
public:
  CovarianceField(Grid2D grid, Eigen::MatrixXd values);

  //! Zero field.
  static CovarianceField zero(const Grid2D& grid);
  //! sum_k weights[k] * f_k (x) f_k.
  static CovarianceField from_eigenpairs(std::span<const double> weights,
                                         std::span<const GridFunction> functions);
  //! weight * (f (x) g), not symmetrised.
  static CovarianceField outer(const GridFunction& f, const GridFunction& g, double weight = 1.0);

  const Grid2D& grid() const { return grid_; }
  const Eigen::MatrixXd& values() const { return values_; }
  double operator()(std::size_t p, std::size_t q) const { return values_(p, q); }

  //! (Gamma f)(u) = integral gamma(u, v) f(v) dv.
  GridFunction apply(const GridFunction& f) const;
  //! <Gamma, f (x) g> = double integral gamma(u, v) f(u) g(v).
  double pair(const GridFunction& f, const GridFunction& g) const;
  //! Quadrature trace, Delta * sum_p gamma(p, p).
  double trace() const;
  double max_asymmetry() const;

  CovarianceField operator+(const CovarianceField& other) const;
  CovarianceField operator-(const CovarianceField& other) const;
  CovarianceField operator*(double s) const;

private:
  Grid2D grid_;
  Eigen::MatrixXd values_;
};

//! gamma(u, v) = (1/n) sum_i (C_i(u) - mean(u)) (C_i(v) - mean(v)).
//! OpenMP over node rows; every entry is summed in trajectory order, so the
//! result does not depend on the worker count.
CovarianceField covariance_field(const TrajectoryEnsemble& e, const GridFunction& mean);

//! Eigenpairs of the discretised covariance operator, sorted by decreasing
//! eigenvalue. All G^2 pairs are kept; eigenvalues under 1e-12 are set to 0.
//! Eigenfunctions are quadrature-orthonormal and sign-normalised: the
//! integral of each is >= 0, and when that integral vanishes the first node
//! with |phi| > 1e-8 is positive.
struct EigenSystem
{
  std::vector<double> eigenvalues;
  std::vector<GridFunction> eigenfunctions;
  //! flipped[k] records whether the solver's vector was negated.
  std::vector<bool> flipped;

  std::size_t size() const { return eigenvalues.size(); }
  //! Number of strictly positive eigenvalues.
  std::size_t rank() const;
  double total_variance() const;
};

EigenSystem eigendecompose(const CovarianceField& c);

//! Applies the sign convention in place and returns whether f was negated.
bool normalise_sign(std::vector<double>& f, const Grid2D& grid);

//! n x K matrix of principal component scores <C_i - mean, phi_k>.
struct ScoreMatrix
{
  Eigen::MatrixXd values;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
  std::vector<double> column(std::size_t k) const;
};

ScoreMatrix scores(const TrajectoryEnsemble& e, const GridFunction& mean, const EigenSystem& es,
                   std::size_t K);

enum class KSelection
{
  Cvp,
  Scree,
  Fixed,
};

KSelection parse_k_selection(const std::string& name);
std::string to_string(KSelection method);

struct KChoice
{
  std::size_t K = 0;
  //! All eigenvalues zero; K is 0.
  bool degenerate = false;
  //! Share of total variance carried by the first K components.
  double cvp = 0.0;
  //! Non-empty when lambda_1 > ... > lambda_K > lambda_{K+1} fails by less
  //! than 1e-10 somewhere; names the offending gap.
  std::string gap_warning;
};

//! Cvp: smallest K whose cumulative share reaches `threshold`.
//! Scree: K maximising lambda_K / lambda_{K+1} among positive eigenvalues.
//! Fixed: `threshold` is taken as K and clamped to the number of pairs.
KChoice select_K(const EigenSystem& es, KSelection method, double threshold);

//! First-order perturbation of the k-th eigenfunction (0-based k):
//! T = sum_{j != k} (lambda_k - lambda_j)^{-1} <Z, phi_k (x) phi_j> phi_j.
//! When `truth` holds fewer than G^2 pairs the orthogonal complement of its
//! eigenfunctions is treated as the eigenvalue-0 eigenspace. Throws
//! NumericalError if lambda_k is within 1e-10 of any other eigenvalue.
GridFunction tkn_projection(const CovarianceField& zn, const EigenSystem& truth, std::size_t k);

//! Both sides of <phiHat - phi, phi> = -1/2 ||phiHat - phi||^2.
//! Inputs must have unit norm within 1e-10.
std::pair<double, double> eigenfunction_identity_check(const GridFunction& phi_hat,
                                                       const GridFunction& phi);

//! Returns f or -f, whichever has non-negative inner product with reference.
GridFunction align_sign(const GridFunction& f, const GridFunction& reference);

//! Writes `<prefix>.json` (eigenvalues, file list) and `<prefix>_phi<k>.csv`
//! for the first `count` eigenfunctions.
void write_eigensystem(const std::string& prefix, const EigenSystem& es, std::size_t count);
//! CSV `u,v,u2,v2,gamma`, rows ordered by (p, q).
void write_covariance_csv(const std::string& path, const CovarianceField& c);

namespace serial {

CovarianceField covariance_field(const TrajectoryEnsemble& e, const GridFunction& mean);

} // namespace serial

} // namespace ccfpca
