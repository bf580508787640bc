#include "ccfpca/fpca.hpp"

#include "ccfpca/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace ccfpca {

const Grid2D& TrajectoryEnsemble::grid() const
{
  if (trajs.empty()) {
    throw ValidationError("empty trajectory ensemble");
  }
  return trajs.front().grid();
}

void TrajectoryEnsemble::validate() const
{
  if (trajs.empty()) {
    throw ValidationError("empty trajectory ensemble");
  }
  if (xs.size() != trajs.size()) {
    throw ValidationError("ensemble has " + std::to_string(xs.size()) + " covariates but " +
                          std::to_string(trajs.size()) + " trajectories");
  }
  for (const auto& t : trajs) {
    require_same_grid(t, trajs.front());
  }
}

GridFunction TrajectoryEnsemble::average() const
{
  validate();
  const auto& g = grid();
  std::vector<double> acc(g.num_nodes(), 0.0);
  for (const auto& t : trajs) {
    const auto v = t.values();
    for (std::size_t p = 0; p < acc.size(); ++p) {
      acc[p] += v[p];
    }
  }
  const auto n = static_cast<double>(trajs.size());
  for (double& a : acc) {
    a /= n;
  }
  return GridFunction(g, std::move(acc));
}

CovarianceField::CovarianceField(Grid2D grid, Eigen::MatrixXd values)
  : grid_(std::move(grid))
  , values_(std::move(values))
{
  const auto m = static_cast<Eigen::Index>(grid_.num_nodes());
  if (values_.rows() != m || values_.cols() != m) {
    throw ValidationError("covariance field must be G^2 x G^2");
  }
}

CovarianceField CovarianceField::zero(const Grid2D& grid)
{
  const auto m = static_cast<Eigen::Index>(grid.num_nodes());
  return CovarianceField(grid, Eigen::MatrixXd::Zero(m, m));
}

CovarianceField CovarianceField::from_eigenpairs(std::span<const double> weights,
                                                 std::span<const GridFunction> functions)
{
  if (weights.size() != functions.size() || functions.empty()) {
    throw ValidationError("from_eigenpairs: need matching, non-empty weights and functions");
  }
  const auto& grid = functions.front().grid();
  const auto m = static_cast<Eigen::Index>(grid.num_nodes());
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t k = 0; k < functions.size(); ++k) {
    require_same_grid(functions[k], functions.front());
    const Eigen::Map<const Eigen::VectorXd> f(functions[k].values().data(), m);
    v.noalias() += weights[k] * f * f.transpose();
  }
  return CovarianceField(grid, std::move(v));
}

CovarianceField CovarianceField::outer(const GridFunction& f, const GridFunction& g, double weight)
{
  require_same_grid(f, g);
  const auto m = static_cast<Eigen::Index>(f.grid().num_nodes());
  const Eigen::Map<const Eigen::VectorXd> fv(f.values().data(), m);
  const Eigen::Map<const Eigen::VectorXd> gv(g.values().data(), m);
  return CovarianceField(f.grid(), weight * fv * gv.transpose());
}

GridFunction CovarianceField::apply(const GridFunction& f) const
{
  if (!(f.grid() == grid_)) {
    throw ValidationError("grid mismatch between field and function");
  }
  const auto m = static_cast<Eigen::Index>(grid_.num_nodes());
  const Eigen::Map<const Eigen::VectorXd> fv(f.values().data(), m);
  const Eigen::VectorXd out = grid_.cell_weight() * (values_ * fv);
  return GridFunction(grid_, std::vector<double>(out.data(), out.data() + m));
}

double CovarianceField::pair(const GridFunction& f, const GridFunction& g) const
{
  if (!(f.grid() == grid_) || !(g.grid() == grid_)) {
    throw ValidationError("grid mismatch between field and function");
  }
  const auto m = static_cast<Eigen::Index>(grid_.num_nodes());
  const Eigen::Map<const Eigen::VectorXd> fv(f.values().data(), m);
  const Eigen::Map<const Eigen::VectorXd> gv(g.values().data(), m);
  const double w = grid_.cell_weight();
  return w * w * fv.dot(values_ * gv);
}

double CovarianceField::trace() const
{
  return grid_.cell_weight() * values_.trace();
}

double CovarianceField::max_asymmetry() const
{
  return (values_ - values_.transpose()).cwiseAbs().maxCoeff();
}

CovarianceField CovarianceField::operator+(const CovarianceField& other) const
{
  if (!(grid_ == other.grid_)) {
    throw ValidationError("grid mismatch between covariance fields");
  }
  return CovarianceField(grid_, values_ + other.values_);
}

CovarianceField CovarianceField::operator-(const CovarianceField& other) const
{
  if (!(grid_ == other.grid_)) {
    throw ValidationError("grid mismatch between covariance fields");
  }
  return CovarianceField(grid_, values_ - other.values_);
}

CovarianceField CovarianceField::operator*(double s) const
{
  return CovarianceField(grid_, values_ * s);
}

namespace {

// Centred data, node-major: row p holds C_i(p) - mean(p) for i = 0..n-1.
std::vector<double> centred_rows(const TrajectoryEnsemble& e, const GridFunction& mean)
{
  e.validate();
  if (e.size() < 2) {
    throw ValidationError("covariance needs at least 2 trajectories");
  }
  require_same_grid(e.trajs.front(), mean);
  const auto n = e.size();
  const auto m = mean.grid().num_nodes();
  std::vector<double> d(m * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto t = e.trajs[i].values();
    for (std::size_t p = 0; p < m; ++p) {
      d[p * n + i] = t[p] - mean.at(p);
    }
  }
  return d;
}

double centred_entry(const double* dp, const double* dq, std::size_t n)
{
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s += dp[i] * dq[i];
  }
  return s / static_cast<double>(n);
}

} // namespace

CovarianceField covariance_field(const TrajectoryEnsemble& e, const GridFunction& mean)
{
  const auto d = centred_rows(e, mean);
  const auto n = e.size();
  const auto m = mean.grid().num_nodes();
  Eigen::MatrixXd v(m, m);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t pp = 0; pp < static_cast<std::ptrdiff_t>(m); ++pp) {
    const auto p = static_cast<std::size_t>(pp);
    for (std::size_t q = p; q < m; ++q) {
      const double s = centred_entry(&d[p * n], &d[q * n], n);
      v(p, q) = s;
      v(q, p) = s;
    }
  }
  return CovarianceField(mean.grid(), std::move(v));
}

CovarianceField serial::covariance_field(const TrajectoryEnsemble& e, const GridFunction& mean)
{
  const auto d = centred_rows(e, mean);
  const auto n = e.size();
  const auto m = mean.grid().num_nodes();
  Eigen::MatrixXd v(m, m);
  for (std::size_t p = 0; p < m; ++p) {
    for (std::size_t q = p; q < m; ++q) {
      const double s = centred_entry(&d[p * n], &d[q * n], n);
      v(p, q) = s;
      v(q, p) = s;
    }
  }
  return CovarianceField(mean.grid(), std::move(v));
}

std::size_t EigenSystem::rank() const
{
  return static_cast<std::size_t>(
    std::count_if(eigenvalues.begin(), eigenvalues.end(), [](double l) { return l > 0.0; }));
}

double EigenSystem::total_variance() const
{
  double s = 0.0;
  for (double l : eigenvalues) {
    s += l;
  }
  return s;
}

bool normalise_sign(std::vector<double>& f, const Grid2D& grid)
{
  double total = 0.0;
  for (double v : f) {
    total += v;
  }
  total *= grid.cell_weight();
  bool flip = false;
  if (std::abs(total) >= 1e-12) {
    flip = total < 0.0;
  } else {
    for (double v : f) {
      if (std::abs(v) > 1e-8) {
        flip = v < 0.0;
        break;
      }
    }
  }
  if (flip) {
    for (double& v : f) {
      v = -v;
    }
  }
  return flip;
}

EigenSystem eigendecompose(const CovarianceField& c)
{
  const double asym = c.max_asymmetry();
  if (asym > 1e-10) {
    throw ValidationError("covariance field is not symmetric (max asymmetry " +
                          format_double(asym) + ")");
  }
  const auto& grid = c.grid();
  const auto m = static_cast<Eigen::Index>(grid.num_nodes());
  const double delta = grid.cell_weight();
  const Eigen::MatrixXd op = 0.5 * delta * (c.values() + c.values().transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(op);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("symmetric eigensolver did not converge");
  }
  const double scale = 1.0 / std::sqrt(delta);
  EigenSystem es;
  es.eigenvalues.reserve(m);
  es.eigenfunctions.reserve(m);
  es.flipped.reserve(m);
  // Round-off floor, relative to the spectrum.
  const double top = std::max(std::abs(solver.eigenvalues()(m - 1)), std::abs(solver.eigenvalues()(0)));
  const double floor = static_cast<double>(m) * std::numeric_limits<double>::epsilon() * top;
  // Eigen returns ascending order.
  for (Eigen::Index k = m - 1; k >= 0; --k) {
    double lambda = solver.eigenvalues()(k);
    if (lambda <= floor) {
      lambda = 0.0;
    }
    std::vector<double> f(m);
    for (Eigen::Index p = 0; p < m; ++p) {
      f[p] = solver.eigenvectors()(p, k) * scale;
    }
    es.flipped.push_back(normalise_sign(f, grid));
    es.eigenvalues.push_back(lambda);
    es.eigenfunctions.emplace_back(grid, std::move(f));
  }
  return es;
}

std::vector<double> ScoreMatrix::column(std::size_t k) const
{
  const Eigen::VectorXd c = values.col(static_cast<Eigen::Index>(k));
  return std::vector<double>(c.data(), c.data() + c.size());
}

ScoreMatrix scores(const TrajectoryEnsemble& e, const GridFunction& mean, const EigenSystem& es,
                   std::size_t K)
{
  e.validate();
  require_same_grid(e.trajs.front(), mean);
  if (K > es.size()) {
    throw ValidationError("K = " + std::to_string(K) + " exceeds the " +
                          std::to_string(es.size()) + " available eigenpairs");
  }
  const auto n = e.size();
  ScoreMatrix s;
  s.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(K));
  for (std::size_t i = 0; i < n; ++i) {
    const auto centred = e.trajs[i] - mean;
    for (std::size_t k = 0; k < K; ++k) {
      s.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
        inner_product(centred, es.eigenfunctions[k]);
    }
  }
  return s;
}

KSelection parse_k_selection(const std::string& name)
{
  if (name == "cvp") {
    return KSelection::Cvp;
  }
  if (name == "scree") {
    return KSelection::Scree;
  }
  if (name == "fixed") {
    return KSelection::Fixed;
  }
  throw ValidationError("unknown K selection `" + name + "` (cvp|scree|fixed)");
}

std::string to_string(KSelection method)
{
  switch (method) {
    case KSelection::Cvp:
      return "cvp";
    case KSelection::Scree:
      return "scree";
    case KSelection::Fixed:
      return "fixed";
  }
  return "?";
}

KChoice select_K(const EigenSystem& es, KSelection method, double threshold)
{
  KChoice out;
  const double total = es.total_variance();
  const auto rank = es.rank();
  if (method == KSelection::Fixed) {
    if (!(threshold >= 0.0)) {
      throw ValidationError("fixed K must be non-negative");
    }
    out.K = std::min(static_cast<std::size_t>(std::llround(threshold)), es.size());
  } else if (rank == 0) {
    out.degenerate = true;
    out.K = 0;
    return out;
  } else if (method == KSelection::Cvp) {
    if (!(threshold > 0.0) || threshold > 1.0) {
      throw ValidationError("CVP threshold must lie in (0, 1], got " + format_double(threshold));
    }
    double cum = 0.0;
    out.K = rank;
    for (std::size_t k = 0; k < rank; ++k) {
      cum += es.eigenvalues[k];
      if (cum / total >= threshold - 1e-12) {
        out.K = k + 1;
        break;
      }
    }
  } else {
    out.K = 1;
    double best = 0.0;
    for (std::size_t k = 0; k + 1 < rank; ++k) {
      const double ratio = es.eigenvalues[k] / es.eigenvalues[k + 1];
      if (ratio > best) {
        best = ratio;
        out.K = k + 1;
      }
    }
  }
  if (total > 0.0) {
    double cum = 0.0;
    for (std::size_t k = 0; k < out.K; ++k) {
      cum += es.eigenvalues[k];
    }
    out.cvp = cum / total;
  }
  for (std::size_t k = 0; k < out.K && k + 1 < es.size(); ++k) {
    if (es.eigenvalues[k] - es.eigenvalues[k + 1] < 1e-10) {
      out.gap_warning = "eigenvalues " + std::to_string(k + 1) + " and " + std::to_string(k + 2) +
                        " are not separated (gap < 1e-10)";
      break;
    }
  }
  return out;
}

GridFunction tkn_projection(const CovarianceField& zn, const EigenSystem& truth, std::size_t k)
{
  if (k >= truth.size()) {
    throw ValidationError("component index out of range");
  }
  const auto& grid = zn.grid();
  const double lk = truth.eigenvalues[k];
  for (std::size_t j = 0; j < truth.size(); ++j) {
    if (j != k && std::abs(lk - truth.eigenvalues[j]) < 1e-10) {
      throw NumericalError("eigenvalues " + std::to_string(k + 1) + " and " +
                           std::to_string(j + 1) + " coincide; distinct ordered eigenvalues are "
                                                   "required");
    }
  }
  const auto& phik = truth.eigenfunctions[k];
  const auto z_phik = zn.apply(phik);
  std::vector<double> out(grid.num_nodes(), 0.0);
  std::vector<double> residual(z_phik.values().begin(), z_phik.values().end());
  for (std::size_t j = 0; j < truth.size(); ++j) {
    const auto& phij = truth.eigenfunctions[j];
    require_same_grid(phij, phik);
    const double c = inner_product(z_phik, phij);
    for (std::size_t p = 0; p < out.size(); ++p) {
      residual[p] -= c * phij.at(p);
    }
    if (j == k) {
      continue;
    }
    const double coef = c / (lk - truth.eigenvalues[j]);
    for (std::size_t p = 0; p < out.size(); ++p) {
      out[p] += coef * phij.at(p);
    }
  }
  if (truth.size() < grid.num_nodes()) {
    if (std::abs(lk) < 1e-10) {
      throw NumericalError("eigenvalue " + std::to_string(k + 1) +
                           " is zero and coincides with the null space");
    }
    for (std::size_t p = 0; p < out.size(); ++p) {
      out[p] += residual[p] / lk;
    }
  }
  return GridFunction(grid, std::move(out));
}

std::pair<double, double> eigenfunction_identity_check(const GridFunction& phi_hat,
                                                       const GridFunction& phi)
{
  if (std::abs(l2_norm(phi_hat) - 1.0) > 1e-10 || std::abs(l2_norm(phi) - 1.0) > 1e-10) {
    throw ValidationError("eigenfunction_identity_check needs unit-norm inputs");
  }
  const auto diff = phi_hat - phi;
  const double lhs = inner_product(diff, phi);
  const double rhs = -0.5 * inner_product(diff, diff);
  return {lhs, rhs};
}

GridFunction align_sign(const GridFunction& f, const GridFunction& reference)
{
  return inner_product(f, reference) < 0.0 ? f * -1.0 : f;
}

void write_eigensystem(const std::string& prefix, const EigenSystem& es, std::size_t count)
{
  count = std::min(count, es.size());
  nlohmann::ordered_json j;
  j["grid"] = es.eigenfunctions.empty() ? 0 : es.eigenfunctions.front().grid().size();
  j["eigenvalues"] = es.eigenvalues;
  std::vector<std::string> files;
  const auto slash = prefix.find_last_of('/');
  const auto base = slash == std::string::npos ? prefix : prefix.substr(slash + 1);
  for (std::size_t k = 0; k < count; ++k) {
    const auto name = "_phi" + std::to_string(k + 1) + ".csv";
    write_grid_csv(prefix + name, es.eigenfunctions[k]);
    files.push_back(base + name);
  }
  j["eigenfunction_files"] = files;
  std::ofstream out(prefix + ".json");
  if (!out) {
    throw ValidationError("cannot open " + prefix + ".json for writing");
  }
  out << j.dump(2) << '\n';
}

void write_covariance_csv(const std::string& path, const CovarianceField& c)
{
  std::ofstream out(path);
  if (!out) {
    throw ValidationError("cannot open " + path + " for writing");
  }
  const auto& grid = c.grid();
  const auto g = grid.size();
  out << "u,v,u2,v2,gamma\n";
  for (std::size_t p = 0; p < grid.num_nodes(); ++p) {
    for (std::size_t q = 0; q < grid.num_nodes(); ++q) {
      out << format_double(grid.node(p / g)) << ',' << format_double(grid.node(p % g)) << ','
          << format_double(grid.node(q / g)) << ',' << format_double(grid.node(q % g)) << ','
          << format_double(c(p, q)) << '\n';
    }
  }
}

} // namespace ccfpca
