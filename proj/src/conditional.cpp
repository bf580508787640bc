#include "ccfpca/conditional.hpp"

#include "ccfpca/error.hpp"
#include "ccfpca/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace ccfpca {

std::span<const double> Sample::margin(int j) const
{
  if (j == 1) {
    return y1;
  }
  if (j == 2) {
    return y2;
  }
  throw ValidationError("margin index must be 1 or 2, got " + std::to_string(j));
}

void Sample::validate() const
{
  if (y1.size() != x.size() || y2.size() != x.size()) {
    throw ValidationError("sample columns have different lengths");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(y1[i]) || !std::isfinite(y2[i]) || !std::isfinite(x[i])) {
      throw ValidationError("sample record " + std::to_string(i) + " is not finite");
    }
  }
}

void write_sample_csv(std::ostream& out, const Sample& s)
{
  out << "y1,y2,x\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    out << format_double(s.y1[i]) << ',' << format_double(s.y2[i]) << ','
        << format_double(s.x[i]) << '\n';
  }
}

void write_sample_csv(const std::string& path, const Sample& s)
{
  std::ofstream out(path);
  if (!out) {
    throw ValidationError("cannot open " + path + " for writing");
  }
  write_sample_csv(out, s);
}

Sample read_sample_csv(std::istream& in)
{
  std::string line;
  if (!std::getline(in, line)) {
    throw ValidationError("sample CSV line 1: missing header `y1,y2,x`");
  }
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
  if (line != "y1,y2,x") {
    throw ValidationError("sample CSV line 1: expected header `y1,y2,x`, got `" + line + "`");
  }
  Sample s;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    std::istringstream row(line);
    std::string cell;
    double f[3];
    for (int c = 0; c < 3; ++c) {
      if (!std::getline(row, cell, ',')) {
        throw ValidationError("sample CSV line " + std::to_string(lineno) +
                              ": expected 3 fields");
      }
      char* end = nullptr;
      f[c] = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0') {
        throw ValidationError("sample CSV line " + std::to_string(lineno) + ": bad number `" +
                              cell + "`");
      }
      if (!std::isfinite(f[c])) {
        throw ValidationError("sample CSV line " + std::to_string(lineno) +
                              ": non-finite entry `" + cell + "`");
      }
    }
    if (std::getline(row, cell, ',')) {
      throw ValidationError("sample CSV line " + std::to_string(lineno) +
                            ": expected 3 fields");
    }
    s.y1.push_back(f[0]);
    s.y2.push_back(f[1]);
    s.x.push_back(f[2]);
  }
  return s;
}

Sample read_sample_csv(const std::string& path)
{
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("cannot open " + path);
  }
  return read_sample_csv(in);
}

KernelFamily parse_kernel_family(const std::string& name)
{
  if (name == "epanechnikov") {
    return KernelFamily::Epanechnikov;
  }
  if (name == "gaussian") {
    return KernelFamily::Gaussian;
  }
  if (name == "uniform") {
    return KernelFamily::Uniform;
  }
  throw ValidationError("unknown kernel `" + name + "` (epanechnikov|gaussian|uniform)");
}

std::string to_string(KernelFamily family)
{
  switch (family) {
    case KernelFamily::Epanechnikov:
      return "epanechnikov";
    case KernelFamily::Gaussian:
      return "gaussian";
    case KernelFamily::Uniform:
      return "uniform";
  }
  return "?";
}

double KernelSpec::profile(double t) const
{
  switch (family) {
    case KernelFamily::Epanechnikov:
      return std::abs(t) <= 1.0 ? 0.75 * (1.0 - t * t) : 0.0;
    case KernelFamily::Gaussian:
      return std::exp(-0.5 * t * t) * 0.3989422804014327;
    case KernelFamily::Uniform:
      return std::abs(t) <= 1.0 ? 0.5 : 0.0;
  }
  return 0.0;
}

double rule_of_thumb_bandwidth(std::span<const double> xs, double c, double exponent)
{
  if (xs.size() < 2) {
    throw ValidationError("rule-of-thumb bandwidth needs at least 2 covariate values");
  }
  const double sd = stddev(xs);
  if (!(sd > 0.0)) {
    throw NumericalError("covariate has zero spread; set the bandwidth explicitly");
  }
  return c * sd * std::pow(static_cast<double>(xs.size()), exponent);
}

namespace {

void check_kernel(const KernelSpec& k)
{
  if (!(k.bandwidth > 0.0) || !std::isfinite(k.bandwidth)) {
    throw ValidationError("bandwidth must be positive and finite, got " +
                          format_double(k.bandwidth));
  }
}

// Normalises raw kernel values in place; returns false if they sum to 0.
bool normalise(std::vector<double>& w)
{
  double total = 0.0;
  for (double v : w) {
    total += v;
  }
  if (!(total > 0.0)) {
    std::fill(w.begin(), w.end(), 0.0);
    return false;
  }
  for (double& v : w) {
    v /= total;
  }
  return true;
}

void require_weights(const WeightVector& w, std::size_t n)
{
  if (w.degenerate) {
    throw NumericalError("degenerate kernel weights: no observation within the bandwidth; "
                         "increase the bandwidth");
  }
  if (w.w.size() != n) {
    throw ValidationError("weight vector length does not match sample size");
  }
}

} // namespace

WeightVector nw_weights(double x, std::span<const double> xs, const KernelSpec& kernel)
{
  check_kernel(kernel);
  WeightVector out;
  out.w.resize(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out.w[i] = kernel.profile((x - xs[i]) / kernel.bandwidth);
  }
  out.degenerate = !normalise(out.w);
  return out;
}

double cond_cdf(double y, int margin, const WeightVector& w, const Sample& s)
{
  const auto ys = s.margin(margin);
  require_weights(w, ys.size());
  double f = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    if (ys[i] <= y) {
      f += w.w[i];
    }
  }
  return std::min(f, 1.0);
}

double cond_quantile(double u, int margin, const WeightVector& w, const Sample& s)
{
  if (!(u > 0.0) || u > 1.0) {
    throw ValidationError("quantile level must lie in (0, 1], got " + format_double(u));
  }
  const auto ys = s.margin(margin);
  require_weights(w, ys.size());
  std::vector<std::size_t> order(ys.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ys[a] < ys[b]; });
  double cum = 0.0;
  double last_positive = ys[order.front()];
  for (std::size_t i : order) {
    if (w.w[i] <= 0.0) {
      continue;
    }
    cum += w.w[i];
    last_positive = ys[i];
    if (u < 1.0 && cum >= u) {
      return ys[i];
    }
  }
  // u = 1, or rounding kept the cumulative mass just below u.
  return last_positive;
}

namespace {

// Weighted ECDF of each margin at the record's own response, with weights
// centred at the record's own covariate.
void pseudo_pair(const Sample& s, const KernelSpec& k1, const KernelSpec& k2, bool loo,
                 std::size_t i, std::vector<double>& scratch1, std::vector<double>& scratch2,
                 double& e1, double& e2)
{
  const auto n = s.size();
  const bool same = (k1.family == k2.family && k1.bandwidth == k2.bandwidth);
  for (std::size_t l = 0; l < n; ++l) {
    scratch1[l] = (loo && l == i) ? 0.0 : k1.profile((s.x[i] - s.x[l]) / k1.bandwidth);
  }
  if (!normalise(scratch1)) {
    throw NumericalError("degenerate kernel weights at observation " + std::to_string(i) +
                         " (x = " + format_double(s.x[i]) + "); increase bandwidth g1");
  }
  const std::vector<double>* w2 = &scratch1;
  if (!same) {
    for (std::size_t l = 0; l < n; ++l) {
      scratch2[l] = (loo && l == i) ? 0.0 : k2.profile((s.x[i] - s.x[l]) / k2.bandwidth);
    }
    if (!normalise(scratch2)) {
      throw NumericalError("degenerate kernel weights at observation " + std::to_string(i) +
                           " (x = " + format_double(s.x[i]) + "); increase bandwidth g2");
    }
    w2 = &scratch2;
  }
  double f1 = 0.0;
  double f2 = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    if (s.y1[l] <= s.y1[i]) {
      f1 += scratch1[l];
    }
    if (s.y2[l] <= s.y2[i]) {
      f2 += (*w2)[l];
    }
  }
  e1 = std::clamp(f1, 0.0, 1.0);
  e2 = std::clamp(f2, 0.0, 1.0);
}

void check_pseudo_inputs(const Sample& s, const KernelSpec& k1, const KernelSpec& k2)
{
  s.validate();
  check_kernel(k1);
  check_kernel(k2);
}

} // namespace

PseudoSample pseudo_observations(const Sample& s, const KernelSpec& k1, const KernelSpec& k2,
                                 bool leave_one_out)
{
  check_pseudo_inputs(s, k1, k2);
  const auto n = s.size();
  PseudoSample p;
  p.e1.resize(n);
  p.e2.resize(n);
  std::string failure;
  std::size_t failed_at = n;
#pragma omp parallel
  {
    std::vector<double> scratch1(n);
    std::vector<double> scratch2(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      try {
        pseudo_pair(s, k1, k2, leave_one_out, i, scratch1, scratch2, p.e1[i], p.e2[i]);
      } catch (const NumericalError& e) {
#pragma omp critical(ccfpca_pseudo_failure)
        if (i < failed_at) {
          failed_at = i;
          failure = e.what();
        }
      }
    }
  }
  if (failed_at < n) {
    throw NumericalError(failure);
  }
  p.ties = count_ties(p.e1) + count_ties(p.e2);
  return p;
}

PseudoSample serial::pseudo_observations(const Sample& s, const KernelSpec& k1,
                                         const KernelSpec& k2, bool leave_one_out)
{
  check_pseudo_inputs(s, k1, k2);
  const auto n = s.size();
  PseudoSample p;
  p.e1.resize(n);
  p.e2.resize(n);
  std::vector<double> scratch1(n);
  std::vector<double> scratch2(n);
  for (std::size_t i = 0; i < n; ++i) {
    pseudo_pair(s, k1, k2, leave_one_out, i, scratch1, scratch2, p.e1[i], p.e2[i]);
  }
  p.ties = count_ties(p.e1) + count_ties(p.e2);
  return p;
}

EmpiricalCopula::EmpiricalCopula(const PseudoSample& p)
  : rank1_(stable_ranks(p.e1))
  , rank2_(stable_ranks(p.e2))
{
  if (p.e1.size() != p.e2.size()) {
    throw ValidationError("pseudo-sample margins have different lengths");
  }
}

std::size_t EmpiricalCopula::order_count(double u) const
{
  // F_n^{-1}(u) is the ceil(n u)-th order statistic; every point at or below
  // it is counted.
  const auto n = static_cast<double>(rank1_.size());
  if (u <= 0.0) {
    return 0;
  }
  if (u >= 1.0) {
    return rank1_.size();
  }
  const double k = std::ceil(n * u - 1e-9);
  return static_cast<std::size_t>(std::clamp(k, 0.0, n));
}

double EmpiricalCopula::operator()(double u, double v) const
{
  const auto n = rank1_.size();
  if (n == 0) {
    return 0.0;
  }
  const auto k1 = order_count(u);
  const auto k2 = order_count(v);
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    count += (rank1_[i] < k1 && rank2_[i] < k2);
  }
  return static_cast<double>(count) / static_cast<double>(n);
}

namespace {

// Counting surface on an L x L lattice: point i is counted at every (a, b)
// with a >= first_a[i] and b >= first_b[i]. Returns counts / n, row-major.
std::vector<double> counting_surface(const std::vector<std::size_t>& first_a,
                                     const std::vector<std::size_t>& first_b, std::size_t L)
{
  const auto n = first_a.size();
  std::vector<double> mass((L + 1) * (L + 1), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    mass[first_a[i] * (L + 1) + first_b[i]] += 1.0;
  }
  std::vector<double> vals(L * L);
  std::vector<double> col(L, 0.0);
  for (std::size_t a = 0; a < L; ++a) {
    double row = 0.0;
    for (std::size_t b = 0; b < L; ++b) {
      row += mass[a * (L + 1) + b];
      col[b] += row;
      vals[a * L + b] = n == 0 ? 0.0 : col[b] / static_cast<double>(n);
    }
  }
  return vals;
}

// First lattice index whose level is >= t.
std::size_t first_level_at_least(std::span<const double> levels, double t)
{
  return static_cast<std::size_t>(std::lower_bound(levels.begin(), levels.end(), t) -
                                  levels.begin());
}

} // namespace

std::vector<double> EmpiricalCopula::on_lattice(std::span<const double> levels) const
{
  const auto L = levels.size();
  const auto n = rank1_.size();
  std::vector<std::size_t> k(L);
  for (std::size_t a = 0; a < L; ++a) {
    k[a] = order_count(levels[a]);
  }
  // Point i first enters at the smallest level whose order count exceeds its rank.
  std::vector<std::size_t> fa(n);
  std::vector<std::size_t> fb(n);
  for (std::size_t i = 0; i < n; ++i) {
    fa[i] = static_cast<std::size_t>(std::upper_bound(k.begin(), k.end(), rank1_[i]) - k.begin());
    fb[i] = static_cast<std::size_t>(std::upper_bound(k.begin(), k.end(), rank2_[i]) - k.begin());
  }
  return counting_surface(fa, fb, L);
}

GridFunction EmpiricalCopula::on_grid(const Grid2D& grid) const
{
  return GridFunction(grid, on_lattice(grid.nodes()));
}

std::vector<double> partial_copula_known_margins_lattice(const PseudoSample& known,
                                                         std::span<const double> levels)
{
  const auto n = known.size();
  std::vector<std::size_t> fa(n);
  std::vector<std::size_t> fb(n);
  for (std::size_t i = 0; i < n; ++i) {
    fa[i] = first_level_at_least(levels, known.e1[i]);
    fb[i] = first_level_at_least(levels, known.e2[i]);
  }
  return counting_surface(fa, fb, levels.size());
}

std::vector<double> rank_ecdf_lattice(const PseudoSample& p, std::span<const double> levels)
{
  const auto n = p.size();
  const auto r1 = stable_ranks(p.e1);
  const auto r2 = stable_ranks(p.e2);
  const auto nd = static_cast<double>(n);
  std::vector<std::size_t> fa(n);
  std::vector<std::size_t> fb(n);
  for (std::size_t i = 0; i < n; ++i) {
    fa[i] = first_level_at_least(levels, static_cast<double>(r1[i] + 1) / nd);
    fb[i] = first_level_at_least(levels, static_cast<double>(r2[i] + 1) / nd);
  }
  return counting_surface(fa, fb, levels.size());
}

double empirical_copula(const PseudoSample& p, double u, double v)
{
  return EmpiricalCopula(p)(u, v);
}

double partial_copula_known_margins(const PseudoSample& known, double u, double v)
{
  const auto n = known.size();
  if (n == 0) {
    return 0.0;
  }
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    count += (known.e1[i] <= u && known.e2[i] <= v);
  }
  return static_cast<double>(count) / static_cast<double>(n);
}

double rank_ecdf(const PseudoSample& p, double u, double v)
{
  const auto n = p.size();
  if (n == 0) {
    return 0.0;
  }
  const auto r1 = stable_ranks(p.e1);
  const auto r2 = stable_ranks(p.e2);
  const auto nd = static_cast<double>(n);
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    count += (static_cast<double>(r1[i] + 1) / nd <= u && static_cast<double>(r2[i] + 1) / nd <= v);
  }
  return static_cast<double>(count) / nd;
}

TrajectoryBuilder::TrajectoryBuilder(const PseudoSample& p, std::span<const double> xs,
                                     KernelSpec kernel, Grid2D grid)
  : rank1_(stable_ranks(p.e1))
  , rank2_(stable_ranks(p.e2))
  , order1_(p.size())
  , order2_(p.size())
  , xs_(xs.begin(), xs.end())
  , kernel_(kernel)
  , grid_(std::move(grid))
{
  if (p.e1.size() != xs.size() || p.e2.size() != xs.size()) {
    throw ValidationError("pseudo-sample and covariate lengths differ");
  }
  check_kernel(kernel_);
  for (std::size_t i = 0; i < rank1_.size(); ++i) {
    order1_[rank1_[i]] = i;
    order2_[rank2_[i]] = i;
  }
}

namespace {

// For each grid level u_a: the largest rank counted by the weighted
// generalised inverse, i.e. the rank at which cumulative weight first
// reaches u_a.
std::vector<std::size_t> inverse_ranks(const std::vector<std::size_t>& order,
                                       std::span<const double> w, const Grid2D& grid)
{
  const auto n = order.size();
  std::vector<std::size_t> thr(grid.size());
  std::size_t pos = 0;
  double cum = 0.0;
  for (std::size_t a = 0; a < grid.size(); ++a) {
    const double u = grid.node(a);
    while (pos < n && cum < u) {
      cum += w[order[pos]];
      ++pos;
    }
    thr[a] = (cum >= u) ? pos - 1 : n - 1;
  }
  return thr;
}

} // namespace

GridFunction TrajectoryBuilder::with_weights(std::span<const double> w) const
{
  const auto n = xs_.size();
  const auto g = grid_.size();
  if (w.size() != n) {
    throw ValidationError("weight vector length does not match sample size");
  }
  const auto thr1 = inverse_ranks(order1_, w, grid_);
  const auto thr2 = inverse_ranks(order2_, w, grid_);
  std::vector<double> mass((g + 1) * (g + 1), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (w[i] <= 0.0) {
      continue;
    }
    const auto a = static_cast<std::size_t>(std::lower_bound(thr1.begin(), thr1.end(), rank1_[i]) - thr1.begin());
    const auto b = static_cast<std::size_t>(std::lower_bound(thr2.begin(), thr2.end(), rank2_[i]) - thr2.begin());
    mass[a * (g + 1) + b] += w[i];
  }
  std::vector<double> vals(g * g);
  std::vector<double> col(g, 0.0);
  for (std::size_t a = 0; a < g; ++a) {
    double row = 0.0;
    for (std::size_t b = 0; b < g; ++b) {
      row += mass[a * (g + 1) + b];
      col[b] += row;
      vals[grid_.index(a, b)] = std::clamp(col[b], 0.0, 1.0);
    }
  }
  return GridFunction(grid_, std::move(vals));
}

GridFunction TrajectoryBuilder::operator()(double x) const
{
  const auto w = nw_weights(x, xs_, kernel_);
  if (w.degenerate) {
    throw NumericalError("degenerate kernel weights at x = " + format_double(x) +
                         "; increase bandwidth h");
  }
  return with_weights(w.w);
}

GridFunction gijbels_trajectory(double x, const Sample& s, const KernelSpec& k,
                                const KernelSpec& k1, const KernelSpec& k2, const Grid2D& grid)
{
  const auto p = pseudo_observations(s, k1, k2);
  return TrajectoryBuilder(p, s.x, k, grid)(x);
}

std::vector<GridFunction> trajectory_ensemble(const TrajectoryBuilder& builder,
                                              std::span<const double> at)
{
  const auto m = at.size();
  std::vector<std::vector<double>> vals(m);
  std::string failure;
  std::size_t failed_at = m;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    try {
      const auto f = builder(at[i]);
      vals[i].assign(f.values().begin(), f.values().end());
    } catch (const NumericalError& e) {
#pragma omp critical(ccfpca_traj_failure)
      if (i < failed_at) {
        failed_at = i;
        failure = e.what();
      }
    }
  }
  if (failed_at < m) {
    throw NumericalError(failure);
  }
  std::vector<GridFunction> out;
  out.reserve(m);
  for (auto& v : vals) {
    out.emplace_back(builder.grid(), std::move(v));
  }
  return out;
}

std::vector<GridFunction> serial::trajectory_ensemble(const TrajectoryBuilder& builder,
                                                      std::span<const double> at)
{
  std::vector<GridFunction> out;
  out.reserve(at.size());
  for (double x : at) {
    out.push_back(builder(x));
  }
  return out;
}

} // namespace ccfpca
