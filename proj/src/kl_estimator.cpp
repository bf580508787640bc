#include "ccfpca/kl_estimator.hpp"

#include "ccfpca/error.hpp"
#include "ccfpca/stats.hpp"

#include <algorithm>
#include <cmath>

namespace ccfpca {

namespace {

// Score columns kept beyond the selected K, so callers can re-evaluate the
// fit with a different truncation.
constexpr std::size_t kMinStoredComponents = 16;

std::string to_string(Centering c)
{
  return c == Centering::PartialCopula ? "partial_copula" : "ensemble_average";
}

ResolvedBandwidths resolve_bandwidths(std::span<const double> xs, const PipelineConfig& cfg)
{
  ResolvedBandwidths bw;
  const bool need_rot = !cfg.h || !cfg.h_alpha;
  const double rot = need_rot ? rule_of_thumb_bandwidth(xs, cfg.bandwidth_constant) : 0.0;
  bw.h = cfg.h.value_or(rot);
  bw.g1 = cfg.g1.value_or(bw.h);
  bw.g2 = cfg.g2.value_or(bw.h);
  if (cfg.h_alpha) {
    bw.h_alpha = *cfg.h_alpha;
  } else if (cfg.undersmooth) {
    bw.h_alpha = rule_of_thumb_bandwidth(xs, cfg.bandwidth_constant, -0.4);
  } else {
    bw.h_alpha = rot;
  }
  return bw;
}

} // namespace

nlohmann::ordered_json PipelineConfig::to_json() const
{
  nlohmann::ordered_json j;
  auto opt = [](const std::optional<double>& v) -> nlohmann::ordered_json {
    if (v) {
      return *v;
    }
    return "auto";
  };
  j["grid"] = grid;
  j["kernel"] = ccfpca::to_string(kernel);
  j["h"] = opt(h);
  j["g1"] = opt(g1);
  j["g2"] = opt(g2);
  j["h_alpha"] = opt(h_alpha);
  j["bandwidth_constant"] = bandwidth_constant;
  j["undersmooth"] = undersmooth;
  j["cv_alpha"] = cv_alpha;
  j["k_method"] = ccfpca::to_string(k_method);
  j["k_param"] = k_param;
  j["centering"] = to_string(centering);
  j["leave_one_out"] = leave_one_out;
  j["project"] = project;
  return j;
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j)
{
  PipelineConfig cfg;
  auto opt = [&](const char* key, std::optional<double>& out) {
    if (!j.contains(key)) {
      return;
    }
    const auto& v = j.at(key);
    if (v.is_string()) {
      if (v.get<std::string>() != "auto") {
        throw ValidationError(std::string("config key `") + key + "` must be a number or \"auto\"");
      }
      out.reset();
    } else {
      out = v.get<double>();
    }
  };
  try {
    cfg.grid = j.value("grid", cfg.grid);
    if (j.contains("kernel")) {
      cfg.kernel = parse_kernel_family(j.at("kernel").get<std::string>());
    }
    opt("h", cfg.h);
    opt("g1", cfg.g1);
    opt("g2", cfg.g2);
    opt("h_alpha", cfg.h_alpha);
    cfg.bandwidth_constant = j.value("bandwidth_constant", cfg.bandwidth_constant);
    cfg.undersmooth = j.value("undersmooth", cfg.undersmooth);
    cfg.cv_alpha = j.value("cv_alpha", cfg.cv_alpha);
    if (j.contains("k_method")) {
      cfg.k_method = parse_k_selection(j.at("k_method").get<std::string>());
    }
    cfg.k_param = j.value("k_param", cfg.k_param);
    if (j.contains("centering")) {
      const auto c = j.at("centering").get<std::string>();
      if (c == "partial_copula") {
        cfg.centering = Centering::PartialCopula;
      } else if (c == "ensemble_average") {
        cfg.centering = Centering::EnsembleAverage;
      } else {
        throw ValidationError("unknown centering `" + c + "`");
      }
    }
    cfg.leave_one_out = j.value("leave_one_out", cfg.leave_one_out);
    cfg.project = j.value("project", cfg.project);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed estimator config: ") + e.what());
  }
  return cfg;
}

KlFit::KlFit(PipelineConfig cfg, TrajectoryEnsemble ensemble, GridFunction partial,
             GridFunction mean, ResolvedBandwidths bw, std::size_t ties)
  : cfg_(std::move(cfg))
  , ensemble_(std::move(ensemble))
  , partial_(std::move(partial))
  , mean_(std::move(mean))
  , bw_(bw)
  , ties_(ties)
{
  const auto cov = covariance_field(ensemble_, mean_);
  es_ = eigendecompose(cov);
  k_ = select_K(es_, cfg_.k_method, cfg_.k_param);
  const auto stored = std::min(es_.size(), std::max(k_.K, kMinStoredComponents));
  auto sc = scores(ensemble_, mean_, es_, stored);
  if (cfg_.cv_alpha && !cfg_.h_alpha && k_.K > 0) {
    ScoreMatrix selected{sc.values.leftCols(static_cast<Eigen::Index>(k_.K))};
    std::vector<double> candidates;
    for (double f : {0.25, 0.35, 0.5, 0.7, 1.0, 1.4, 2.0}) {
      candidates.push_back(f * bw_.h_alpha);
    }
    bw_.h_alpha = cv_bandwidth(ensemble_.xs, selected, cfg_.kernel, candidates);
  }
  regressor_.emplace(ensemble_.xs, std::move(sc), KernelSpec{cfg_.kernel, bw_.h_alpha});
}

KlFit KlFit::from_sample(const Sample& s, const PipelineConfig& cfg)
{
  s.validate();
  if (s.size() < 2) {
    throw ValidationError("sample needs at least 2 records");
  }
  const Grid2D grid(cfg.grid);
  const auto bw = resolve_bandwidths(s.x, cfg);
  const auto pseudo = pseudo_observations(s, KernelSpec{cfg.kernel, bw.g1},
                                          KernelSpec{cfg.kernel, bw.g2}, cfg.leave_one_out);
  auto partial = EmpiricalCopula(pseudo).on_grid(grid);
  TrajectoryBuilder builder(pseudo, s.x, KernelSpec{cfg.kernel, bw.h}, grid);
  TrajectoryEnsemble ens;
  ens.xs = s.x;
  ens.trajs = trajectory_ensemble(builder, s.x);
  ens.mode = TrajectoryMode::Estimated;
  auto mean = cfg.centering == Centering::PartialCopula ? partial : ens.average();
  KlFit fit(cfg, std::move(ens), std::move(partial), std::move(mean), bw, pseudo.ties);
  fit.builder_.emplace(std::move(builder));
  return fit;
}

KlFit KlFit::from_ensemble(TrajectoryEnsemble ensemble, const GridFunction& mean,
                           const PipelineConfig& cfg)
{
  ensemble.validate();
  require_same_grid(ensemble.trajs.front(), mean);
  const auto bw = resolve_bandwidths(ensemble.xs, cfg);
  auto centre = cfg.centering == Centering::PartialCopula ? mean : ensemble.average();
  return KlFit(cfg, std::move(ensemble), mean, std::move(centre), bw, 0);
}

GridFunction KlFit::baseline(double x) const
{
  if (!builder_) {
    throw ValidationError("baseline estimate needs a fit made from a sample");
  }
  return (*builder_)(x);
}

ConditionalCopulaEstimate KlFit::evaluate(double x) const
{
  return evaluate(x, k_.K);
}

ConditionalCopulaEstimate KlFit::evaluate(double x, std::size_t K) const
{
  if (K > regressor_->components()) {
    throw ValidationError("K = " + std::to_string(K) + " exceeds the " +
                          std::to_string(regressor_->components()) + " stored components");
  }
  const auto alpha = regressor_->eval_alpha(x);
  std::vector<double> vals(mean_.values().begin(), mean_.values().end());
  for (std::size_t k = 0; k < K; ++k) {
    const auto phi = es_.eigenfunctions[k].values();
    for (std::size_t p = 0; p < vals.size(); ++p) {
      vals[p] += alpha[k] * phi[p];
    }
  }
  const auto shown = std::min<std::size_t>(es_.size(), 20);
  const double total = es_.total_variance();
  double cum = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    cum += es_.eigenvalues[k];
  }
  ConditionalCopulaEstimate e{
    .x = x,
    .surface = GridFunction(mean_.grid(), std::move(vals)),
    .K = K,
    .projected = false,
    .alpha = std::vector<double>(alpha.begin(), alpha.begin() + static_cast<std::ptrdiff_t>(K)),
    .bandwidths = bw_,
    .spectrum = std::vector<double>(es_.eigenvalues.begin(),
                                    es_.eigenvalues.begin() + static_cast<std::ptrdiff_t>(shown)),
    .cvp = total > 0.0 ? cum / total : 0.0,
    .degenerate_spectrum = k_.degenerate,
    .gap_warning = k_.gap_warning,
    .ties = ties_,
  };
  if (cfg_.project) {
    e.surface = frechet_project(e.surface);
    e.projected = true;
  }
  return e;
}

ConditionalCopulaEstimate estimate_conditional_copula(double x, const Sample& s,
                                                      const PipelineConfig& cfg)
{
  return KlFit::from_sample(s, cfg).evaluate(x);
}

GridFunction frechet_project(const GridFunction& f)
{
  const auto& grid = f.grid();
  std::vector<double> vals(grid.num_nodes());
  for (std::size_t a = 0; a < grid.size(); ++a) {
    for (std::size_t b = 0; b < grid.size(); ++b) {
      const double u = grid.node(a);
      const double v = grid.node(b);
      const double lo = std::max(u + v - 1.0, 0.0);
      const double hi = std::min(u, v);
      vals[grid.index(a, b)] = std::clamp(f(a, b), lo, hi);
    }
  }
  return GridFunction(grid, std::move(vals));
}

GridFunction baseline_estimate(double x, const Sample& s, const PipelineConfig& cfg)
{
  s.validate();
  const Grid2D grid(cfg.grid);
  const auto bw = resolve_bandwidths(s.x, cfg);
  const auto pseudo = pseudo_observations(s, KernelSpec{cfg.kernel, bw.g1},
                                          KernelSpec{cfg.kernel, bw.g2}, cfg.leave_one_out);
  return TrajectoryBuilder(pseudo, s.x, KernelSpec{cfg.kernel, bw.h}, grid)(x);
}

nlohmann::ordered_json estimate_metadata(const ConditionalCopulaEstimate& e,
                                         const PipelineConfig& cfg)
{
  nlohmann::ordered_json j;
  j["x"] = e.x;
  j["K"] = e.K;
  j["projected"] = e.projected;
  j["alpha"] = e.alpha;
  j["bandwidths"] = {{"h", e.bandwidths.h},
                     {"g1", e.bandwidths.g1},
                     {"g2", e.bandwidths.g2},
                     {"h_alpha", e.bandwidths.h_alpha}};
  j["spectrum"] = e.spectrum;
  j["cvp"] = e.cvp;
  j["degenerate_spectrum"] = e.degenerate_spectrum;
  if (!e.gap_warning.empty()) {
    j["gap_warning"] = e.gap_warning;
  }
  j["ties"] = e.ties;
  j["k_scope"] = "global (selected once from the fitted spectrum)";
  j["config"] = cfg.to_json();
  return j;
}

} // namespace ccfpca
