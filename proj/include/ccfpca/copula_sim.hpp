#pragma once

#include "ccfpca/conditional.hpp"
#include "ccfpca/fpca.hpp"
#include "ccfpca/grid.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ccfpca {

enum class CopulaFamily
{
  Independence,
  Clayton,
  Frank,
  Fgm,
  Gumbel,
};

CopulaFamily parse_copula_family(const std::string& name);
std::string to_string(CopulaFamily family);

//! One-parameter bivariate copula with closed-form CDF.
struct CopulaModel
{
  CopulaFamily family = CopulaFamily::Independence;
  double theta = 0.0;

  //! Throws ValidationError when theta is outside the family's range.
  void validate() const;
  double cdf(double u, double v) const;
  //! dC/du (u, v), the conditional CDF of V given U = u.
  double h(double u, double v) const;
  //! Solves h(u, v) = w for v.
  double h_inverse(double w, double u) const;
};

double copula_cdf(const CopulaModel& m, double u, double v);

//! Kendall's tau -> parameter. Frank is solved by bisection to 1e-10.
double tau_to_theta(CopulaFamily family, double tau);
double theta_to_tau(CopulaFamily family, double theta);
//! D_1(x) = (1/x) int_0^x t / (e^t - 1) dt, by adaptive Gauss-Kronrod.
double debye1(double x);
//! Open/closed bounds of the attainable tau range.
std::pair<double, double> tau_range(CopulaFamily family);
bool tau_attainable(CopulaFamily family, double tau);

//! Kendall-tau link tau(x).
struct TauLink
{
  enum class Kind
  {
    Constant,
    Linear,
    Sine,
  };
  Kind kind = Kind::Constant;
  //! Constant: c = p0. Linear: p0 + p1 x. Sine: p0 + p1 sin(2 pi x).
  double p0 = 0.0;
  double p1 = 0.0;

  double operator()(double x) const;
  //! Parses `const:c`, `linear:a,b`, `sine:amplitude,center`.
  static TauLink parse(const std::string& text);
  std::string to_string() const;
};

//! Y_j | X = x ~ Normal(intercept + slope x, sd).
struct NormalMargin
{
  double intercept = 0.0;
  double slope = 0.0;
  double sd = 1.0;

  double mean(double x) const { return intercept + slope * x; }
};

struct CovariateLaw
{
  enum class Kind
  {
    Uniform,
    Normal,
  };
  Kind kind = Kind::Uniform;
  //! Uniform(a, b) or Normal(a, b) with b the standard deviation.
  double a = 0.0;
  double b = 1.0;

  double draw(double uniform) const;
};

//! Data-generating process with a known conditional copula C_x.
struct ConditionalModel
{
  CopulaFamily family = CopulaFamily::Clayton;
  TauLink link{TauLink::Kind::Sine, 0.4, 0.25};
  NormalMargin margin1{0.0, 2.0, 1.0};
  NormalMargin margin2{0.0, -1.0, 1.0};
  CovariateLaw covariate;

  //! Checks the link over the covariate support (a dense scan for bounded
  //! support; Normal covariates are checked when drawn).
  void validate() const;
  CopulaModel copula_at(double x) const;
  nlohmann::ordered_json to_json() const;
};

//! Sample plus the hidden truth: exact probability transforms and theta(X_i).
struct SimulatedData
{
  Sample sample;
  PseudoSample known;
  std::vector<double> theta;
};

//! Conditional-inversion sampler. Observation i uses its own substream of
//! `seed`, so output does not depend on thread count.
SimulatedData sample_conditional(const ConditionalModel& m, std::size_t n, std::uint64_t seed);

//! Exact C_x on the grid nodes.
GridFunction true_conditional_copula(const ConditionalModel& m, double x, const Grid2D& grid);

//! Truth sidecar written next to a simulated sample.
nlohmann::ordered_json truth_sidecar(const ConditionalModel& m, std::size_t n, std::uint64_t seed,
                                     const SimulatedData* with_epsilons);
//! Inverse of ConditionalModel::to_json.
ConditionalModel conditional_model_from_json(const nlohmann::json& j);

//! phi_{p,q}(u, v) = c_p c_q cos(p pi u) cos(q pi v) with c_0 = 1, c_p = sqrt(2).
//! Exactly quadrature-orthonormal on a midpoint grid when p, q < G.
GridFunction cosine_tensor(const Grid2D& grid, int p, int q);

//! Karhunen-Loeve process C_X = mean + sum_k xi_k phi_k with
//! xi_k = alpha_k(X) + noise, X ~ Uniform(0, 1),
//! alpha_k(x) = sqrt(2 r lambda_k) cos(2 pi k x), noise ~ Normal(0, (1 - r) lambda_k).
//! The scores are uncorrelated with variances lambda_k for every r in [0, 1].
class SyntheticKLModel
{
public:
  SyntheticKLModel(GridFunction mean, std::vector<double> eigenvalues,
                   std::vector<std::pair<int, int>> modes, double link_strength);

  //! mean = uv, modes (1,0), (0,1), (1,1), ... as many as eigenvalues.
  static SyntheticKLModel standard(const Grid2D& grid, std::vector<double> eigenvalues,
                                   double link_strength);

  const Grid2D& grid() const { return mean_.grid(); }
  const GridFunction& mean() const { return mean_; }
  const std::vector<double>& eigenvalues() const { return eigenvalues_; }
  const std::vector<GridFunction>& eigenfunctions() const { return phis_; }
  double link_strength() const { return r_; }

  std::vector<double> alpha(double x) const;
  //! mean + sum_k alpha_k(x) phi_k, i.e. E[C_X | X = x].
  GridFunction conditional_surface(double x) const;
  CovarianceField covariance() const;
  //! The prescribed eigenpairs as an EigenSystem (size = number of modes).
  EigenSystem eigensystem() const;

private:
  GridFunction mean_;
  std::vector<double> eigenvalues_;
  std::vector<GridFunction> phis_;
  double r_;
};

struct SyntheticDraw
{
  TrajectoryEnsemble ensemble;
  //! n x K true scores.
  Eigen::MatrixXd scores;
};

SyntheticDraw synthetic_kl_sample(const SyntheticKLModel& m, std::size_t n, std::uint64_t seed);

} // namespace ccfpca
