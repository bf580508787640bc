#include "ccfpca/mc_harness.hpp"

#include "ccfpca/error.hpp"
#include "ccfpca/stats.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#ifndef CCFPCA_VERSION
#define CCFPCA_VERSION "unknown"
#endif

namespace ccfpca {

namespace {

// Final-step bound for the consistency experiment, taken from the committed
// pilot run (calibration/consistency.json): 95% quantile of the
// 500-replication sup error at n = 2000, rounded up to 0.005.
constexpr double kCalibratedSupBound = 0.035;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct RepResult
{
  std::vector<double> values;
  std::string error;
};

// Per-(n, replication) metrics, always reduced in (n index, replication) order.
struct RepTable
{
  std::vector<std::string> names;
  std::vector<std::vector<RepResult>> by_n;
  std::vector<std::vector<std::uint64_t>> seeds;

  std::size_t column(const std::string& name) const
  {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) {
      throw std::logic_error("no metric `" + name + "`");
    }
    return static_cast<std::size_t>(it - names.begin());
  }

  std::vector<double> finite(std::size_t ni, const std::string& name) const
  {
    const auto c = column(name);
    std::vector<double> out;
    for (const auto& r : by_n[ni]) {
      if (r.error.empty() && std::isfinite(r.values[c])) {
        out.push_back(r.values[c]);
      }
    }
    return out;
  }

  std::size_t failures(std::size_t ni) const
  {
    return static_cast<std::size_t>(std::count_if(by_n[ni].begin(), by_n[ni].end(),
                                                  [](const RepResult& r) { return !r.error.empty(); }));
  }
};

template <class Job>
RepTable run_replications(const ExperimentConfig& cfg, std::vector<std::string> names, Job job)
{
  RepTable t;
  t.names = std::move(names);
  const std::size_t L = cfg.n_ladder.size();
  const std::size_t R = cfg.replications;
  t.by_n.assign(L, std::vector<RepResult>(R));
  t.seeds.assign(L, std::vector<std::uint64_t>(R));
  for (std::size_t ni = 0; ni < L; ++ni) {
    for (std::size_t r = 0; r < R; ++r) {
      t.seeds[ni][r] = derive_seed(cfg.seed, ni, r);
    }
  }
  const auto total = static_cast<std::ptrdiff_t>(L * R);
  const std::size_t width = t.names.size();
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t j = 0; j < total; ++j) {
    const auto ni = static_cast<std::size_t>(j) / R;
    const auto r = static_cast<std::size_t>(j) % R;
    auto& slot = t.by_n[ni][r];
    try {
      slot.values = job(cfg.n_ladder[ni], t.seeds[ni][r]);
      if (slot.values.size() != width) {
        throw std::logic_error("metric count mismatch");
      }
    } catch (const std::exception& e) {
      slot.values.assign(width, kNaN);
      slot.error = e.what();
      if (slot.error.empty()) {
        slot.error = "unknown failure";
      }
    }
  }
  return t;
}

nlohmann::ordered_json number_or_null(double v)
{
  if (std::isfinite(v)) {
    return v;
  }
  return nullptr;
}

double median_or_nan(std::vector<double> v)
{
  return v.empty() ? kNaN : median(std::move(v));
}

double quantile_or_nan(std::vector<double> v, double p)
{
  return v.empty() ? kNaN : quantile(std::move(v), p);
}

std::string fmt(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string x_tag(double x)
{
  return "x=" + fmt(x);
}

ExperimentReport start_report(const ExperimentConfig& cfg, const RepTable& t)
{
  ExperimentReport rep;
  rep.id = cfg.id;
  rep.config = cfg.to_json();
  rep.config_hash = config_hash(rep.config);
  rep.version = CCFPCA_VERSION;
  rep.seeds = nlohmann::ordered_json::array();
  for (std::size_t ni = 0; ni < cfg.n_ladder.size(); ++ni) {
    rep.seeds.push_back({{"n", cfg.n_ladder[ni]}, {"seeds", t.seeds[ni]}});
  }
  for (std::size_t ni = 0; ni < t.by_n.size(); ++ni) {
    for (std::size_t r = 0; r < t.by_n[ni].size(); ++r) {
      const auto& res = t.by_n[ni][r];
      nlohmann::ordered_json row;
      row["n"] = cfg.n_ladder[ni];
      row["replication"] = r;
      row["seed"] = t.seeds[ni][r];
      for (std::size_t c = 0; c < t.names.size(); ++c) {
        row[t.names[c]] = number_or_null(res.values[c]);
      }
      row["error"] = res.error;
      rep.raw.push_back(std::move(row));
    }
  }
  return rep;
}

// True when every consecutive pair strictly decreases (NaN fails).
bool strictly_decreasing(const std::vector<double>& m)
{
  for (std::size_t i = 0; i + 1 < m.size(); ++i) {
    if (!(m[i + 1] < m[i])) {
      return false;
    }
  }
  return !m.empty() && std::all_of(m.begin(), m.end(), [](double v) { return std::isfinite(v); });
}

std::string join(const std::vector<double>& m)
{
  std::string s;
  for (std::size_t i = 0; i < m.size(); ++i) {
    s += (i ? ", " : "") + fmt(m[i]);
  }
  return "[" + s + "]";
}

template <class Fn>
std::vector<double> per_n(const ExperimentConfig& cfg, Fn fn)
{
  std::vector<double> out;
  for (std::size_t ni = 0; ni < cfg.n_ladder.size(); ++ni) {
    out.push_back(fn(ni));
  }
  return out;
}

std::vector<double> lattice_levels()
{
  std::vector<double> levels(101);
  for (std::size_t i = 0; i <= 100; ++i) {
    levels[i] = static_cast<double>(i) / 100.0;
  }
  return levels;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b)
{
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

} // namespace

double ExperimentConfig::tolerance(const std::string& name) const
{
  const auto it = tolerances.find(name);
  if (it == tolerances.end()) {
    throw ValidationError("experiment `" + id + "` needs tolerance `" + name + "`");
  }
  return it->second;
}

void ExperimentConfig::validate() const
{
  if (replications < 1) {
    throw ValidationError("replications must be >= 1");
  }
  if (n_ladder.empty()) {
    throw ValidationError("n ladder is empty");
  }
  for (std::size_t i = 0; i < n_ladder.size(); ++i) {
    if (n_ladder[i] < 1) {
      throw ValidationError("n ladder entries must be >= 1");
    }
    if (i > 0 && n_ladder[i] <= n_ladder[i - 1]) {
      throw ValidationError("n ladder must be strictly increasing");
    }
  }
  for (double x : eval_points) {
    if (!std::isfinite(x)) {
      throw ValidationError("evaluation points must be finite");
    }
  }
  for (const auto& [name, v] : tolerances) {
    if (!std::isfinite(v)) {
      throw ValidationError("tolerance `" + name + "` must be finite");
    }
  }
}

nlohmann::ordered_json ExperimentConfig::to_json() const
{
  nlohmann::ordered_json j;
  j["id"] = id;
  j["model"] = model.to_json();
  j["kl_eigenvalues"] = kl_eigenvalues;
  j["kl_link_strength"] = kl_link_strength;
  j["n_ladder"] = n_ladder;
  j["replications"] = replications;
  j["seed"] = seed;
  j["estimator"] = estimator.to_json();
  j["eval_points"] = eval_points;
  auto pairs = nlohmann::ordered_json::array();
  for (const auto& p : point_pairs) {
    pairs.push_back({{"u1", p.u1}, {"v1", p.v1}, {"u2", p.u2}, {"v2", p.v2}, {"tolerance", p.tolerance}});
  }
  j["point_pairs"] = pairs;
  nlohmann::ordered_json tol = nlohmann::ordered_json::object();
  for (const auto& [name, v] : tolerances) {
    tol[name] = v;
  }
  j["tolerances"] = tol;
  return j;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j)
{
  ExperimentConfig cfg;
  try {
    cfg.id = j.at("id").get<std::string>();
    // Start from the shipped defaults so partial configs are usable.
    cfg = default_experiment(cfg.id);
    if (j.contains("model")) {
      cfg.model = conditional_model_from_json(j.at("model"));
    }
    if (j.contains("kl_eigenvalues")) {
      cfg.kl_eigenvalues = j.at("kl_eigenvalues").get<std::vector<double>>();
    }
    cfg.kl_link_strength = j.value("kl_link_strength", cfg.kl_link_strength);
    if (j.contains("n_ladder")) {
      cfg.n_ladder = j.at("n_ladder").get<std::vector<std::size_t>>();
    }
    cfg.replications = j.value("replications", cfg.replications);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("estimator")) {
      cfg.estimator = pipeline_config_from_json(j.at("estimator"));
    }
    if (j.contains("eval_points")) {
      cfg.eval_points = j.at("eval_points").get<std::vector<double>>();
    }
    if (j.contains("point_pairs")) {
      cfg.point_pairs.clear();
      for (const auto& p : j.at("point_pairs")) {
        cfg.point_pairs.push_back(PointPair{p.at("u1").get<double>(), p.at("v1").get<double>(),
                                            p.at("u2").get<double>(), p.at("v2").get<double>(),
                                            p.at("tolerance").get<double>()});
      }
    }
    if (j.contains("tolerances")) {
      for (const auto& [name, v] : j.at("tolerances").items()) {
        cfg.tolerances[name] = v.get<double>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed experiment config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

bool ExperimentReport::passed() const
{
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

const Check* ExperimentReport::find(const std::string& name) const
{
  for (const auto& c : checks) {
    if (c.name == name) {
      return &c;
    }
  }
  return nullptr;
}

nlohmann::ordered_json ExperimentReport::to_json(bool include_raw) const
{
  nlohmann::ordered_json j;
  j["id"] = id;
  j["version"] = version;
  j["config_hash"] = config_hash;
  j["passed"] = passed();
  auto cs = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    cs.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  }
  j["checks"] = cs;
  j["notes"] = notes;
  j["table"] = table;
  j["config"] = config;
  j["seeds"] = seeds;
  if (include_raw) {
    j["raw"] = raw;
  }
  return j;
}

std::string ExperimentReport::to_text() const
{
  std::ostringstream out;
  out << "experiment " << id << "  version " << version << "  config " << config_hash << "\n\n";
  if (!table.empty()) {
    std::vector<std::string> keys;
    for (const auto& [k, v] : table.front().items()) {
      keys.push_back(k);
    }
    std::vector<std::vector<std::string>> cells;
    for (const auto& row : table) {
      std::vector<std::string> line;
      for (const auto& k : keys) {
        const auto& v = row.at(k);
        if (v.is_number_float()) {
          line.push_back(fmt(v.get<double>()));
        } else if (v.is_null()) {
          line.push_back("nan");
        } else if (v.is_string()) {
          line.push_back(v.get<std::string>());
        } else {
          line.push_back(v.dump());
        }
      }
      cells.push_back(std::move(line));
    }
    std::vector<std::size_t> width(keys.size());
    for (std::size_t c = 0; c < keys.size(); ++c) {
      width[c] = keys[c].size();
      for (const auto& line : cells) {
        width[c] = std::max(width[c], line[c].size());
      }
    }
    auto emit = [&](const std::vector<std::string>& line) {
      for (std::size_t c = 0; c < line.size(); ++c) {
        out << (c ? "  " : "") << std::string(width[c] - line[c].size(), ' ') << line[c];
      }
      out << "\n";
    };
    emit(keys);
    for (const auto& line : cells) {
      emit(line);
    }
    out << "\n";
  }
  for (const auto& c : checks) {
    out << (c.passed ? "PASS  " : "FAIL  ") << c.name << "  " << c.detail << "\n";
  }
  for (const auto& n : notes) {
    out << "note: " << n << "\n";
  }
  out << (passed() ? "overall PASS" : "overall FAIL") << "\n";
  return out.str();
}

void write_report(const std::string& prefix, const ExperimentReport& r, bool raw_csv)
{
  auto open = [](const std::string& path) {
    std::ofstream f(path);
    if (!f) {
      throw ValidationError("cannot write `" + path + "`");
    }
    return f;
  };
  {
    auto f = open(prefix + ".json");
    f << r.to_json(false).dump(2) << "\n";
  }
  {
    auto f = open(prefix + ".txt");
    f << r.to_text();
  }
  if (raw_csv && !r.raw.empty()) {
    auto f = open(prefix + "_raw.csv");
    std::vector<std::string> keys;
    for (const auto& [k, v] : r.raw.front().items()) {
      keys.push_back(k);
    }
    for (std::size_t c = 0; c < keys.size(); ++c) {
      f << (c ? "," : "") << keys[c];
    }
    f << "\n";
    for (const auto& row : r.raw) {
      for (std::size_t c = 0; c < keys.size(); ++c) {
        const auto& v = row.at(keys[c]);
        f << (c ? "," : "");
        if (v.is_number_float()) {
          f << format_double(v.get<double>());
        } else if (v.is_null()) {
          f << "nan";
        } else if (v.is_string()) {
          // Error messages: keep the CSV one field wide.
          auto s = v.get<std::string>();
          std::replace(s.begin(), s.end(), ',', ';');
          std::replace(s.begin(), s.end(), '\n', ' ');
          f << s;
        } else {
          f << v.dump();
        }
      }
      f << "\n";
    }
  }
}

std::string config_hash(const nlohmann::ordered_json& config)
{
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double true_partial_copula(const ConditionalModel& m, double u, double v)
{
  if (m.family == CopulaFamily::Independence) {
    return u * v;
  }
  constexpr int M = 2000;
  double acc = 0.0;
  for (int i = 0; i < M; ++i) {
    const double p = (i + 0.5) / M;
    acc += m.copula_at(m.covariate.draw(p)).cdf(u, v);
  }
  return acc / M;
}

ExperimentReport consistency_experiment(const ExperimentConfig& cfg)
{
  cfg.validate();
  cfg.model.validate();
  const double bound = cfg.tolerance("final_sup_error");
  const Grid2D grid(cfg.estimator.grid);
  std::vector<GridFunction> truth;
  std::vector<std::string> names;
  for (double x : cfg.eval_points) {
    truth.push_back(true_conditional_copula(cfg.model, x, grid));
    names.push_back("sup_error@" + x_tag(x));
    names.push_back("l2_error@" + x_tag(x));
  }
  names.push_back("K");
  const auto t = run_replications(cfg, names, [&](std::size_t n, std::uint64_t seed) {
    const auto sim = sample_conditional(cfg.model, n, seed);
    const auto fit = KlFit::from_sample(sim.sample, cfg.estimator);
    std::vector<double> out;
    for (std::size_t e = 0; e < cfg.eval_points.size(); ++e) {
      const auto est = fit.evaluate(cfg.eval_points[e]);
      out.push_back(sup_distance(est.surface, truth[e]));
      out.push_back(l2_distance(est.surface, truth[e]));
    }
    out.push_back(static_cast<double>(fit.k_choice().K));
    return out;
  });
  auto rep = start_report(cfg, t);
  rep.notes.push_back("K is selected once per replication from the fitted spectrum, not per x");
  rep.notes.push_back("bandwidths follow the configured rule; no rate condition on the trajectory "
                      "estimation error is verified, convergence is measured empirically");
  for (double x : cfg.eval_points) {
    const auto sup = "sup_error@" + x_tag(x);
    const auto l2 = "l2_error@" + x_tag(x);
    for (std::size_t ni = 0; ni < cfg.n_ladder.size(); ++ni) {
      nlohmann::ordered_json row;
      row["n"] = cfg.n_ladder[ni];
      row["x"] = x;
      row["median_sup"] = number_or_null(median_or_nan(t.finite(ni, sup)));
      row["q25_sup"] = number_or_null(quantile_or_nan(t.finite(ni, sup), 0.25));
      row["q75_sup"] = number_or_null(quantile_or_nan(t.finite(ni, sup), 0.75));
      row["median_l2"] = number_or_null(median_or_nan(t.finite(ni, l2)));
      row["median_K"] = number_or_null(median_or_nan(t.finite(ni, "K")));
      row["failures"] = t.failures(ni);
      rep.table.push_back(std::move(row));
    }
    const auto meds = per_n(cfg, [&](std::size_t ni) { return median_or_nan(t.finite(ni, sup)); });
    rep.checks.push_back({"sup_error_decreasing@" + x_tag(x), strictly_decreasing(meds),
                          "medians " + join(meds)});
    const double last = meds.back();
    rep.checks.push_back({"final_sup_error@" + x_tag(x), std::isfinite(last) && last <= bound,
                          "median " + fmt(last) + " vs bound " + fmt(bound)});
  }
  return rep;
}

ExperimentReport bridge_covariance_experiment(const ExperimentConfig& cfg)
{
  cfg.validate();
  cfg.model.validate();
  if (cfg.point_pairs.empty()) {
    throw ValidationError("bridge experiment needs at least one point pair");
  }
  ExperimentConfig run = cfg;
  run.n_ladder = {cfg.n_ladder.back()};
  struct Target
  {
    double c1, c2, cov;
  };
  std::vector<Target> targets;
  std::vector<std::string> names;
  for (std::size_t p = 0; p < cfg.point_pairs.size(); ++p) {
    const auto& pp = cfg.point_pairs[p];
    const double c1 = true_partial_copula(cfg.model, pp.u1, pp.v1);
    const double c2 = true_partial_copula(cfg.model, pp.u2, pp.v2);
    const double cm = true_partial_copula(cfg.model, std::min(pp.u1, pp.u2), std::min(pp.v1, pp.v2));
    targets.push_back({c1, c2, cm - c1 * c2});
    names.push_back("G_a@pair" + std::to_string(p));
    names.push_back("G_b@pair" + std::to_string(p));
  }
  const auto t = run_replications(run, names, [&](std::size_t n, std::uint64_t seed) {
    const auto sim = sample_conditional(cfg.model, n, seed);
    const double rn = std::sqrt(static_cast<double>(n));
    std::vector<double> out;
    for (std::size_t p = 0; p < cfg.point_pairs.size(); ++p) {
      const auto& pp = cfg.point_pairs[p];
      out.push_back(rn * (partial_copula_known_margins(sim.known, pp.u1, pp.v1) - targets[p].c1));
      out.push_back(rn * (partial_copula_known_margins(sim.known, pp.u2, pp.v2) - targets[p].c2));
    }
    return out;
  });
  auto rep = start_report(run, t);
  rep.notes.push_back("computed from the exact conditional transforms (known margins), so "
                      "estimation error in the pseudo-observations does not enter");
  rep.config = cfg.to_json();
  rep.config_hash = config_hash(rep.config);
  for (std::size_t p = 0; p < cfg.point_pairs.size(); ++p) {
    const auto& pp = cfg.point_pairs[p];
    const auto a = t.finite(0, "G_a@pair" + std::to_string(p));
    const auto b = t.finite(0, "G_b@pair" + std::to_string(p));
    double cov = kNaN;
    if (a.size() == b.size() && a.size() >= 2) {
      const double ma = mean(a);
      const double mb = mean(b);
      double acc = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        acc += (a[i] - ma) * (b[i] - mb);
      }
      cov = acc / static_cast<double>(a.size() - 1);
    }
    const double err = std::abs(cov - targets[p].cov);
    nlohmann::ordered_json row;
    row["n"] = run.n_ladder.front();
    row["u1"] = pp.u1;
    row["v1"] = pp.v1;
    row["u2"] = pp.u2;
    row["v2"] = pp.v2;
    row["empirical_cov"] = number_or_null(cov);
    row["target_cov"] = targets[p].cov;
    row["abs_error"] = number_or_null(err);
    row["tolerance"] = pp.tolerance;
    rep.table.push_back(std::move(row));
    char name[96];
    std::snprintf(name, sizeof name, "bridge_cov((%g,%g),(%g,%g))", pp.u1, pp.v1, pp.u2, pp.v2);
    rep.checks.push_back({name, std::isfinite(err) && err <= pp.tolerance,
                          "empirical " + fmt(cov) + " vs target " + fmt(targets[p].cov) +
                            " (tolerance " + fmt(pp.tolerance) + ")"});
  }
  return rep;
}

ExperimentReport eigen_perturbation_experiment(const ExperimentConfig& cfg)
{
  cfg.validate();
  const double factor = cfg.tolerance("residual_factor");
  const double band = cfg.tolerance("clt_band");
  const double ident_tol = cfg.tolerance("identity");
  const Grid2D grid(cfg.estimator.grid);
  const auto model = SyntheticKLModel::standard(grid, cfg.kl_eigenvalues, cfg.kl_link_strength);
  const auto truth = model.eigensystem();
  const auto gamma = model.covariance();
  if (truth.size() == 0) {
    throw ValidationError("perturbation experiment needs at least one eigenvalue");
  }
  // Distinct leading eigenvalue, including against the implicit null space.
  for (std::size_t j = 1; j <= truth.size(); ++j) {
    const double other = j < truth.size() ? truth.eigenvalues[j] : 0.0;
    if (std::abs(truth.eigenvalues[0] - other) < 1e-10) {
      throw NumericalError("leading eigenvalue " + fmt(truth.eigenvalues[0]) +
                           " is not separated from eigenvalue " + fmt(other) +
                           "; choose distinct --kl eigenvalues");
    }
  }
  const auto& phi1 = truth.eigenfunctions[0];
  const std::size_t checked = truth.size();
  const auto t = run_replications(
    cfg, {"residual", "identity_residual", "eigenvalue_error", "mean_clt_norm"},
    [&](std::size_t n, std::uint64_t seed) {
      const auto draw = synthetic_kl_sample(model, n, seed);
      const auto cov = covariance_field(draw.ensemble, model.mean());
      const auto es = eigendecompose(cov);
      const double rn = std::sqrt(static_cast<double>(n));
      const auto phi_hat = align_sign(es.eigenfunctions[0], phi1);
      const auto zn = (cov - gamma) * rn;
      const auto T = tkn_projection(zn, truth, 0);
      const double residual = l2_distance((phi_hat - phi1) * rn, T);
      double ident = 0.0;
      for (std::size_t k = 0; k < checked; ++k) {
        const auto ph = align_sign(es.eigenfunctions[k], truth.eigenfunctions[k]);
        const auto [lhs, rhs] = eigenfunction_identity_check(ph, truth.eigenfunctions[k]);
        ident = std::max(ident, std::abs(lhs - rhs));
      }
      const double eig = std::abs(es.eigenvalues[0] - truth.eigenvalues[0]);
      const double clt = l2_norm((draw.ensemble.average() - model.mean()) * rn);
      return std::vector<double>{residual, ident, eig, clt};
    });
  auto rep = start_report(cfg, t);
  rep.notes.push_back("synthetic Karhunen-Loeve trajectories are not constrained to be copulas; "
                      "they exercise the FPCA and perturbation machinery only");
  for (std::size_t ni = 0; ni < cfg.n_ladder.size(); ++ni) {
    nlohmann::ordered_json row;
    row["n"] = cfg.n_ladder[ni];
    row["median_residual"] = number_or_null(median_or_nan(t.finite(ni, "residual")));
    row["q75_residual"] = number_or_null(quantile_or_nan(t.finite(ni, "residual"), 0.75));
    const auto id = t.finite(ni, "identity_residual");
    row["max_identity_residual"] =
      number_or_null(id.empty() ? kNaN : *std::max_element(id.begin(), id.end()));
    row["median_eigenvalue_error"] = number_or_null(median_or_nan(t.finite(ni, "eigenvalue_error")));
    row["median_mean_clt_norm"] = number_or_null(median_or_nan(t.finite(ni, "mean_clt_norm")));
    row["failures"] = t.failures(ni);
    rep.table.push_back(std::move(row));
  }
  const auto res = per_n(cfg, [&](std::size_t ni) { return median_or_nan(t.finite(ni, "residual")); });
  const double shrink = res.front() / res.back();
  rep.checks.push_back({"residual_shrink", std::isfinite(shrink) && shrink >= factor,
                        "medians " + join(res) + ", end-to-end factor " + fmt(shrink) +
                          " (need >= " + fmt(factor) + ")"});
  double worst = 0.0;
  std::size_t failures = 0;
  for (std::size_t ni = 0; ni < cfg.n_ladder.size(); ++ni) {
    failures += t.failures(ni);
    for (double v : t.finite(ni, "identity_residual")) {
      worst = std::max(worst, v);
    }
  }
  rep.checks.push_back({"eigenfunction_identity", failures == 0 && worst <= ident_tol,
                        "max residual " + fmt(worst) + " over all replications, " +
                          std::to_string(failures) + " failed"});
  const auto clt = per_n(cfg, [&](std::size_t ni) { return median_or_nan(t.finite(ni, "mean_clt_norm")); });
  bool stable = std::all_of(clt.begin(), clt.end(), [](double v) { return std::isfinite(v) && v > 0; });
  double worst_change = 0.0;
  for (std::size_t i = 0; stable && i + 1 < clt.size(); ++i) {
    worst_change = std::max(worst_change, std::abs(clt[i + 1] / clt[i] - 1.0));
  }
  stable = stable && worst_change <= band;
  rep.checks.push_back({"mean_clt_stability", stable,
                        "medians " + join(clt) + ", max relative change " + fmt(worst_change) +
                          " (band " + fmt(band) + ")"});
  return rep;
}

ExperimentReport uniformity_and_gap_experiment(const ExperimentConfig& cfg)
{
  cfg.validate();
  cfg.model.validate();
  const double alpha = cfg.tolerance("ks_alpha");
  const double fraction = cfg.tolerance("ks_pass_fraction");
  const auto levels = lattice_levels();
  const auto t = run_replications(
    cfg, {"ks_margin1", "ks_margin2", "gap_known_margins", "gap_rank_ecdf"},
    [&](std::size_t n, std::uint64_t seed) {
      const auto sim = sample_conditional(cfg.model, n, seed);
      const auto cop = EmpiricalCopula(sim.known).on_lattice(levels);
      const auto known = partial_copula_known_margins_lattice(sim.known, levels);
      const auto ranks = rank_ecdf_lattice(sim.known, levels);
      return std::vector<double>{ks_uniform(sim.known.e1), ks_uniform(sim.known.e2),
                                 max_abs_diff(cop, known), max_abs_diff(cop, ranks)};
    });
  auto rep = start_report(cfg, t);
  for (std::size_t ni = 0; ni < cfg.n_ladder.size(); ++ni) {
    const std::size_t n = cfg.n_ladder[ni];
    const double crit = ks_critical_value(n, alpha);
    const double bound = 2.0 / static_cast<double>(n);
    const auto total = static_cast<double>(cfg.replications);
    auto pass_rate = [&](const std::string& name) {
      const auto v = t.finite(ni, name);
      return static_cast<double>(std::count_if(v.begin(), v.end(), [&](double s) { return s < crit; })) / total;
    };
    auto max_of = [&](const std::string& name) {
      const auto v = t.finite(ni, name);
      return v.size() == cfg.replications ? *std::max_element(v.begin(), v.end()) : kNaN;
    };
    const double p1 = pass_rate("ks_margin1");
    const double p2 = pass_rate("ks_margin2");
    const double gk = max_of("gap_known_margins");
    const double gr = max_of("gap_rank_ecdf");
    nlohmann::ordered_json row;
    row["n"] = n;
    row["ks_critical"] = crit;
    row["ks_pass_margin1"] = p1;
    row["ks_pass_margin2"] = p2;
    row["median_ks_margin1"] = number_or_null(median_or_nan(t.finite(ni, "ks_margin1")));
    row["max_gap_known_margins"] = number_or_null(gk);
    row["median_gap_known_margins"] = number_or_null(median_or_nan(t.finite(ni, "gap_known_margins")));
    row["max_gap_rank_ecdf"] = number_or_null(gr);
    row["gap_bound"] = bound;
    rep.table.push_back(std::move(row));
    const auto tag = "@n=" + std::to_string(n);
    for (int j = 1; j <= 2; ++j) {
      const double p = j == 1 ? p1 : p2;
      rep.checks.push_back({"ks_uniform_margin" + std::to_string(j) + tag, p >= fraction,
                            "pass rate " + fmt(p) + " at critical value " + fmt(crit) +
                              " (need >= " + fmt(fraction) + ")"});
    }
    rep.checks.push_back({"gap_known_margins" + tag, std::isfinite(gk) && gk <= bound + 1e-12,
                          "max " + fmt(gk) + " vs 2/n = " + fmt(bound)});
    rep.checks.push_back({"gap_rank_ecdf" + tag, std::isfinite(gr) && gr <= bound + 1e-12,
                          "max " + fmt(gr) + " vs 2/n = " + fmt(bound)});
  }
  return rep;
}

ExperimentReport benchmark_vs_baseline(const ExperimentConfig& cfg)
{
  cfg.validate();
  cfg.model.validate();
  if (cfg.eval_points.empty()) {
    throw ValidationError("benchmark needs at least one evaluation point");
  }
  const Grid2D grid(cfg.estimator.grid);
  std::vector<GridFunction> truth;
  std::vector<std::string> names;
  for (double x : cfg.eval_points) {
    truth.push_back(true_conditional_copula(cfg.model, x, grid));
    for (const char* m : {"ise_kl", "sup_kl", "ise_baseline", "sup_baseline"}) {
      names.push_back(std::string(m) + "@" + x_tag(x));
    }
  }
  const auto t = run_replications(cfg, names, [&](std::size_t n, std::uint64_t seed) {
    const auto sim = sample_conditional(cfg.model, n, seed);
    const auto fit = KlFit::from_sample(sim.sample, cfg.estimator);
    std::vector<double> out;
    for (std::size_t e = 0; e < cfg.eval_points.size(); ++e) {
      const auto est = fit.evaluate(cfg.eval_points[e]).surface;
      const auto base = fit.baseline(cfg.eval_points[e]);
      const double dk = l2_distance(est, truth[e]);
      const double db = l2_distance(base, truth[e]);
      out.push_back(dk * dk);
      out.push_back(sup_distance(est, truth[e]));
      out.push_back(db * db);
      out.push_back(sup_distance(base, truth[e]));
    }
    return out;
  });
  auto rep = start_report(cfg, t);
  rep.notes.push_back("K is selected once per replication from the fitted spectrum, not per x");
  rep.notes.push_back("bandwidths follow the configured rule; no rate condition on the trajectory "
                      "estimation error is verified, convergence is measured empirically");
  for (double x : cfg.eval_points) {
    const auto tag = "@" + x_tag(x);
    for (std::size_t ni = 0; ni < cfg.n_ladder.size(); ++ni) {
      nlohmann::ordered_json row;
      row["n"] = cfg.n_ladder[ni];
      row["x"] = x;
      for (const char* est : {"kl", "baseline"}) {
        const auto ise = t.finite(ni, std::string("ise_") + est + tag);
        row[std::string("mise_") + est] = number_or_null(ise.empty() ? kNaN : mean(ise));
        row[std::string("median_ise_") + est] = number_or_null(median_or_nan(ise));
        row[std::string("median_sup_") + est] =
          number_or_null(median_or_nan(t.finite(ni, std::string("sup_") + est + tag)));
      }
      row["failures"] = t.failures(ni);
      rep.table.push_back(std::move(row));
    }
    for (const char* est : {"kl", "baseline"}) {
      for (const char* metric : {"ise", "sup"}) {
        const auto name = std::string(metric) + "_" + est + tag;
        const auto meds = per_n(cfg, [&](std::size_t ni) { return median_or_nan(t.finite(ni, name)); });
        rep.checks.push_back({"median_" + name + "_decreasing", strictly_decreasing(meds),
                              "medians " + join(meds)});
      }
    }
  }
  return rep;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg)
{
  const auto start = std::chrono::steady_clock::now();
  ExperimentReport rep;
  if (cfg.id == "consistency") {
    rep = consistency_experiment(cfg);
  } else if (cfg.id == "bridge") {
    rep = bridge_covariance_experiment(cfg);
  } else if (cfg.id == "perturbation") {
    rep = eigen_perturbation_experiment(cfg);
  } else if (cfg.id == "uniformity") {
    rep = uniformity_and_gap_experiment(cfg);
  } else if (cfg.id == "benchmark") {
    rep = benchmark_vs_baseline(cfg);
  } else {
    throw ValidationError("unknown experiment `" + cfg.id +
                          "` (expected consistency, bridge, perturbation, uniformity or benchmark)");
  }
  rep.runtime_seconds =
    std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

ExperimentConfig default_experiment(const std::string& id)
{
  ExperimentConfig cfg;
  cfg.id = id;
  cfg.seed = 20240601;
  ConditionalModel clayton_sine;
  clayton_sine.family = CopulaFamily::Clayton;
  clayton_sine.link.kind = TauLink::Kind::Sine;
  clayton_sine.link.p0 = 0.4;
  clayton_sine.link.p1 = 0.25;
  cfg.model = clayton_sine;
  // Experiments test the raw linear estimator.
  cfg.estimator.project = false;
  if (id == "consistency") {
    cfg.n_ladder = {250, 500, 1000, 2000};
    cfg.replications = 50;
    cfg.eval_points = {0.5};
    cfg.tolerances["final_sup_error"] = kCalibratedSupBound;
  } else if (id == "bridge") {
    cfg.model.family = CopulaFamily::Independence;
    cfg.model.link = TauLink{};
    cfg.n_ladder = {500};
    cfg.replications = 2000;
    cfg.point_pairs = {{0.5, 0.5, 0.5, 0.5, 0.02}, {0.25, 0.25, 0.75, 0.75, 0.01}, {1.0, 1.0, 1.0, 1.0, 1e-12}};
  } else if (id == "perturbation") {
    cfg.n_ladder = {100, 400, 1600};
    cfg.replications = 200;
    cfg.estimator.grid = 15;
    cfg.tolerances["residual_factor"] = 2.0;
    cfg.tolerances["clt_band"] = 0.2;
    cfg.tolerances["identity"] = 1e-10;
  } else if (id == "uniformity") {
    cfg.n_ladder = {50, 200, 1000};
    cfg.replications = 100;
    cfg.tolerances["ks_alpha"] = 0.01;
    cfg.tolerances["ks_pass_fraction"] = 0.95;
  } else if (id == "benchmark") {
    cfg.n_ladder = {250, 500, 1000, 2000};
    cfg.replications = 50;
    cfg.eval_points = {0.25, 0.5, 0.75};
  } else {
    throw ValidationError("unknown experiment `" + id +
                          "` (expected consistency, bridge, perturbation, uniformity or benchmark)");
  }
  return cfg;
}

} // namespace ccfpca
