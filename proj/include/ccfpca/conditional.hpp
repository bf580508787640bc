#pragma once

#include "ccfpca/grid.hpp"

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace ccfpca {

//! Observed triples (y1, y2, x), stored column-wise.
struct Sample
{
  std::vector<double> y1;
  std::vector<double> y2;
  std::vector<double> x;

  std::size_t size() const { return x.size(); }
  //! Response column j in {1, 2}.
  std::span<const double> margin(int j) const;
  //! Throws ValidationError unless columns agree in length and are finite.
  void validate() const;
};

void write_sample_csv(std::ostream& out, const Sample& s);
void write_sample_csv(const std::string& path, const Sample& s);
//! Parses a `y1,y2,x` CSV; errors carry the offending line number.
Sample read_sample_csv(std::istream& in);
Sample read_sample_csv(const std::string& path);

enum class KernelFamily
{
  Epanechnikov,
  Gaussian,
  Uniform,
};

KernelFamily parse_kernel_family(const std::string& name);
std::string to_string(KernelFamily family);

struct KernelSpec
{
  KernelFamily family = KernelFamily::Epanechnikov;
  double bandwidth = 1.0;

  //! K(t) for the family, unnormalised bandwidth-free profile.
  double profile(double t) const;
};

//! h = c * sd(x) * n^exponent; the usual choice is exponent = -1/5.
double rule_of_thumb_bandwidth(std::span<const double> xs, double c = 1.0,
                               double exponent = -0.2);

//! Nadaraya-Watson weights. `degenerate` is set when every kernel value is
//! zero; the weights are then all zero and must not be used.
struct WeightVector
{
  std::vector<double> w;
  bool degenerate = false;
};

WeightVector nw_weights(double x, std::span<const double> xs, const KernelSpec& kernel);

//! F_{j,x,h}(y) = sum_i w_i 1{Y_ji <= y}.
double cond_cdf(double y, int margin, const WeightVector& w, const Sample& s);
//! Generalised inverse inf{y : F(y) >= u}; always an observed value.
double cond_quantile(double u, int margin, const WeightVector& w, const Sample& s);

enum class Provenance
{
  EstimatedMargins,
  KnownMargins,
};

//! Probability-integral transforms of the responses, one pair per record.
struct PseudoSample
{
  std::vector<double> e1;
  std::vector<double> e2;
  Provenance provenance = Provenance::EstimatedMargins;
  //! Ties found within either margin. Ties are broken by sample order.
  std::size_t ties = 0;

  std::size_t size() const { return e1.size(); }
};

//! Each pair evaluates the kernel-weighted conditional CDF of margin j at
//! its own covariate. With `leave_one_out` observation i is dropped from
//! its own weighted ECDF.
PseudoSample pseudo_observations(const Sample& s, const KernelSpec& k1, const KernelSpec& k2,
                                 bool leave_one_out = false);

//! Rank-based empirical copula of a pseudo-sample,
//! C(u, v) = F_n(F_{1n}^{-1}(u), F_{2n}^{-1}(v)).
//! A level u within 1e-9 of k/n is treated as exactly k/n.
class EmpiricalCopula
{
public:
  explicit EmpiricalCopula(const PseudoSample& p);

  double operator()(double u, double v) const;
  GridFunction on_grid(const Grid2D& grid) const;
  //! Values on the tensor lattice levels x levels, row-major. Levels must
  //! be nondecreasing.
  std::vector<double> on_lattice(std::span<const double> levels) const;
  std::size_t size() const { return rank1_.size(); }

private:
  std::size_t order_count(double u) const;

  std::vector<std::size_t> rank1_;
  std::vector<std::size_t> rank2_;
};

double empirical_copula(const PseudoSample& p, double u, double v);

//! Empirical joint CDF of exact conditional-probability transforms.
double partial_copula_known_margins(const PseudoSample& known, double u, double v);

//! Empirical CDF of the normalised ranks ((R1+1)/n, (R2+1)/n). Differs from
//! EmpiricalCopula by at most 2/n everywhere.
double rank_ecdf(const PseudoSample& p, double u, double v);

// Lattice forms of the two functions above (levels nondecreasing, output
// row-major over levels x levels), O(n log L + L^2).
std::vector<double> partial_copula_known_margins_lattice(const PseudoSample& known,
                                                         std::span<const double> levels);
std::vector<double> rank_ecdf_lattice(const PseudoSample& p, std::span<const double> levels);

//! Builds kernel-weighted copula trajectories
//! C~_x(u, v) = G_x(G_{1x}^{-1}(u), G_{2x}^{-1}(v)) from one pseudo-sample.
//! Sorting is done once; each trajectory then costs O(n + G^2 + n log G).
class TrajectoryBuilder
{
public:
  TrajectoryBuilder(const PseudoSample& p, std::span<const double> xs, KernelSpec kernel,
                    Grid2D grid);

  //! Throws NumericalError if the weights at x are degenerate.
  GridFunction operator()(double x) const;
  //! Same as operator() with caller-supplied weights.
  GridFunction with_weights(std::span<const double> w) const;

  const Grid2D& grid() const { return grid_; }
  const KernelSpec& kernel() const { return kernel_; }

private:
  std::vector<std::size_t> rank1_;
  std::vector<std::size_t> rank2_;
  std::vector<std::size_t> order1_;
  std::vector<std::size_t> order2_;
  std::vector<double> xs_;
  KernelSpec kernel_;
  Grid2D grid_;
};

//! Convenience form: computes pseudo-observations with (k1, k2) and the
//! trajectory at x with kernel k.
GridFunction gijbels_trajectory(double x, const Sample& s, const KernelSpec& k,
                                const KernelSpec& k1, const KernelSpec& k2, const Grid2D& grid);

//! One trajectory per covariate value (OpenMP over evaluation points).
std::vector<GridFunction> trajectory_ensemble(const TrajectoryBuilder& builder,
                                              std::span<const double> at);

namespace serial {

// Single-threaded reference kernels. The parallel versions must agree with
// these bit for bit.
PseudoSample pseudo_observations(const Sample& s, const KernelSpec& k1, const KernelSpec& k2,
                                 bool leave_one_out = false);
std::vector<GridFunction> trajectory_ensemble(const TrajectoryBuilder& builder,
                                              std::span<const double> at);

} // namespace serial

} // namespace ccfpca
