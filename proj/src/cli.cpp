#include "ccfpca/cli.hpp"

#include "ccfpca/copula_sim.hpp"
#include "ccfpca/error.hpp"
#include "ccfpca/kl_estimator.hpp"
#include "ccfpca/mc_harness.hpp"
#include "ccfpca/stats.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <omp.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace ccfpca::cli {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::optional<double> auto_or_number(const std::string& flag, const std::string& text)
{
  if (text.empty() || text == "auto") {
    return std::nullopt;
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v) || v <= 0.0) {
      throw std::invalid_argument(text);
    }
    return v;
  } catch (const std::logic_error&) {
    throw ValidationError(flag + " must be a positive number or \"auto\", got `" + text + "`");
  }
}

std::vector<double> parse_triple(const std::string& flag, const std::string& text)
{
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::logic_error&) {
      throw ValidationError(flag + ": `" + item + "` is not a number");
    }
  }
  return out;
}

std::string truth_path(const std::string& data_path)
{
  return fs::path(data_path).replace_extension(".truth.json").string();
}

void write_json(const std::string& path, const ojson& j, std::ostream& out)
{
  if (path.empty()) {
    out << j.dump(2) << "\n";
    return;
  }
  std::ofstream f(path);
  if (!f) {
    throw ValidationError("cannot write `" + path + "`");
  }
  f << j.dump(2) << "\n";
}

nlohmann::json read_json_file(const std::string& path)
{
  std::ifstream f(path);
  if (!f) {
    throw ValidationError("cannot open `" + path + "`");
  }
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("`" + path + "` is not valid JSON: " + e.what());
  }
}

// Estimator flags shared by estimate, fpca and diagnose.
struct EstimatorFlags
{
  std::string config;
  std::size_t grid = 21;
  std::string kernel = "epanechnikov";
  std::string h = "auto";
  std::string g1 = "auto";
  std::string g2 = "auto";
  std::string h_alpha = "auto";
  double bandwidth_constant = 1.0;
  bool undersmooth = false;
  bool cv_alpha = false;
  std::string K = "auto";
  std::string k_method = "cvp";
  double cvp = 0.9;
  std::string centering = "partial_copula";
  bool leave_one_out = false;
  bool no_project = false;

  void attach(CLI::App* app)
  {
    app->add_option("--config", config, "Estimator config JSON; explicit flags override it");
    app->add_option("--grid", grid, "Grid nodes per axis");
    app->add_option("--kernel", kernel, "epanechnikov | gaussian | uniform");
    app->add_option("--h", h, "Trajectory bandwidth or auto");
    app->add_option("--g1", g1, "Margin-1 pseudo-observation bandwidth or auto");
    app->add_option("--g2", g2, "Margin-2 pseudo-observation bandwidth or auto");
    app->add_option("--h-alpha", h_alpha, "Score-regression bandwidth or auto");
    app->add_option("--bandwidth-constant", bandwidth_constant, "c in c sd(X) n^-1/5");
    app->add_flag("--undersmooth", undersmooth, "auto h-alpha uses n^-2/5");
    app->add_flag("--cv-alpha", cv_alpha, "pick h-alpha by leave-one-out CV");
    app->add_option("--K", K, "Number of components or auto");
    app->add_option("--k-method", k_method, "cvp | scree (with --K auto)");
    app->add_option("--cvp", cvp, "Cumulative variance threshold in (0, 1]");
    app->add_option("--centering", centering, "partial_copula | ensemble_average");
    app->add_flag("--leave-one-out", leave_one_out, "drop i from its own pseudo-observation");
    app->add_flag("--no-project", no_project, "skip the Frechet-Hoeffding clamp");
  }

  PipelineConfig resolve(const CLI::App* app) const
  {
    PipelineConfig cfg;
    if (!config.empty()) {
      cfg = pipeline_config_from_json(read_json_file(config));
    }
    auto given = [&](const char* flag) { return app->count(flag) > 0; };
    if (config.empty() || given("--grid")) {
      cfg.grid = grid;
    }
    if (config.empty() || given("--kernel")) {
      cfg.kernel = parse_kernel_family(kernel);
    }
    if (config.empty() || given("--h")) {
      cfg.h = auto_or_number("--h", h);
    }
    if (config.empty() || given("--g1")) {
      cfg.g1 = auto_or_number("--g1", g1);
    }
    if (config.empty() || given("--g2")) {
      cfg.g2 = auto_or_number("--g2", g2);
    }
    if (config.empty() || given("--h-alpha")) {
      cfg.h_alpha = auto_or_number("--h-alpha", h_alpha);
    }
    if (config.empty() || given("--bandwidth-constant")) {
      cfg.bandwidth_constant = bandwidth_constant;
    }
    if (given("--undersmooth")) {
      cfg.undersmooth = true;
    }
    if (given("--cv-alpha")) {
      cfg.cv_alpha = true;
    }
    if (config.empty() || given("--K") || given("--k-method") || given("--cvp")) {
      if (K == "auto") {
        cfg.k_method = parse_k_selection(k_method);
        if (cfg.k_method == KSelection::Fixed) {
          throw ValidationError("--k-method fixed needs a numeric --K");
        }
        cfg.k_param = cvp;
      } else {
        std::size_t used = 0;
        long k = -1;
        try {
          k = std::stol(K, &used);
        } catch (const std::logic_error&) {
        }
        if (k < 0 || used != K.size()) {
          throw ValidationError("--K must be a non-negative integer or \"auto\", got `" + K + "`");
        }
        cfg.k_method = KSelection::Fixed;
        cfg.k_param = static_cast<double>(k);
      }
    }
    if (cfg.k_method == KSelection::Cvp && !(cfg.k_param > 0.0 && cfg.k_param <= 1.0)) {
      throw ValidationError("--cvp must lie in (0, 1]");
    }
    if (config.empty() || given("--centering")) {
      if (centering == "partial_copula") {
        cfg.centering = Centering::PartialCopula;
      } else if (centering == "ensemble_average") {
        cfg.centering = Centering::EnsembleAverage;
      } else {
        throw ValidationError("--centering must be partial_copula or ensemble_average");
      }
    }
    if (given("--leave-one-out")) {
      cfg.leave_one_out = true;
    }
    if (given("--no-project")) {
      cfg.project = false;
    }
    if (cfg.grid < 1) {
      throw ValidationError("--grid must be >= 1");
    }
    return cfg;
  }
};

Sample load_input(const std::string& in)
{
  if (in.empty()) {
    throw ValidationError("missing required --in");
  }
  return read_sample_csv(in);
}

// --- simulate -------------------------------------------------------------

struct SimulateCmd
{
  std::string family = "clayton";
  std::string link = "sine:0.25,0.4";
  std::string margin1 = "0,2,1";
  std::string margin2 = "0,-1,1";
  std::string covariate = "uniform:0,1";
  std::string model_file;
  std::size_t n = 0;
  std::uint64_t seed = 1;
  std::string out;
  bool epsilons = false;

  void attach(CLI::App* app)
  {
    app->add_option("--family", family, "clayton | frank | fgm | gumbel | independence");
    app->add_option("--link", link, "Kendall-tau link: const:c | linear:a,b | sine:amplitude,center");
    app->add_option("--margin1", margin1, "Y1 | X=x ~ N(a + b x, sd^2), given as a,b,sd");
    app->add_option("--margin2", margin2, "Y2 | X=x ~ N(a + b x, sd^2), given as a,b,sd");
    app->add_option("--covariate", covariate, "uniform:a,b | normal:mean,sd");
    app->add_option("--model", model_file, "Model JSON (as in a truth sidecar); replaces the flags above");
    app->add_option("--n", n, "Sample size");
    app->add_option("--seed", seed, "Seed");
    app->add_option("--out", out, "Output CSV (y1,y2,x); a .truth.json sidecar is written next to it");
    app->add_flag("--epsilons", epsilons, "store exact transforms and theta(X_i) in the sidecar");
  }

  ConditionalModel model() const
  {
    if (!model_file.empty()) {
      auto j = read_json_file(model_file);
      return conditional_model_from_json(j.contains("model") ? j.at("model") : j);
    }
    ConditionalModel m;
    m.family = parse_copula_family(family);
    m.link = TauLink::parse(link);
    auto margin = [](const std::string& flag, const std::string& text) {
      const auto v = parse_triple(flag, text);
      if (v.size() != 3 || !(v[2] > 0.0)) {
        throw ValidationError(flag + " needs intercept,slope,sd with sd > 0");
      }
      return NormalMargin{v[0], v[1], v[2]};
    };
    m.margin1 = margin("--margin1", margin1);
    m.margin2 = margin("--margin2", margin2);
    const auto colon = covariate.find(':');
    const auto law = covariate.substr(0, colon);
    const auto p = parse_triple("--covariate", colon == std::string::npos ? "" : covariate.substr(colon + 1));
    if ((law != "uniform" && law != "normal") || p.size() != 2) {
      throw ValidationError("--covariate must be uniform:a,b or normal:mean,sd");
    }
    m.covariate.kind = law == "uniform" ? CovariateLaw::Kind::Uniform : CovariateLaw::Kind::Normal;
    m.covariate.a = p[0];
    m.covariate.b = p[1];
    m.validate();
    return m;
  }

  int operator()(std::ostream& out_stream) const
  {
    if (n < 1) {
      throw ValidationError("--n must be >= 1");
    }
    if (out.empty()) {
      throw ValidationError("missing required --out");
    }
    const auto m = model();
    const auto sim = sample_conditional(m, n, seed);
    write_sample_csv(out, sim.sample);
    const auto sidecar = truth_path(out);
    write_json(sidecar, truth_sidecar(m, n, seed, epsilons ? &sim : nullptr), out_stream);
    out_stream << "wrote " << out << " and " << sidecar << "\n";
    return 0;
  }
};

// --- estimate -------------------------------------------------------------

struct EstimateCmd
{
  std::string in;
  std::vector<double> xs;
  std::string out;
  EstimatorFlags est;

  void attach(CLI::App* app)
  {
    app->add_option("--in", in, "Input CSV y1,y2,x");
    app->add_option("--x", xs, "Covariate value(s) to evaluate at");
    app->add_option("--out", out, "Estimate JSON; the surface goes to the same name with .csv");
    est.attach(app);
  }

  int operator()(const CLI::App* app, std::ostream& out_stream) const
  {
    const auto sample = load_input(in);
    if (xs.empty()) {
      throw ValidationError("missing required --x");
    }
    const auto cfg = est.resolve(app);
    const auto fit = KlFit::from_sample(sample, cfg);
    std::optional<ConditionalModel> truth;
    if (fs::exists(truth_path(in))) {
      const auto side = read_json_file(truth_path(in));
      if (!side.contains("model")) {
        throw ValidationError("truth sidecar `" + truth_path(in) + "` has no `model` entry");
      }
      truth = conditional_model_from_json(side.at("model"));
    }
    const fs::path base = out.empty() ? fs::path() : fs::path(out);
    auto results = ojson::array();
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const auto e = fit.evaluate(xs[i]);
      auto meta = estimate_metadata(e, cfg);
      if (truth) {
        const auto t = true_conditional_copula(*truth, xs[i], e.surface.grid());
        meta["truth"] = {{"sup_error", sup_distance(e.surface, t)},
                         {"l2_error", l2_distance(e.surface, t)}};
      }
      if (!out.empty()) {
        auto csv = base;
        if (xs.size() == 1) {
          csv.replace_extension(".csv");
        } else {
          csv = base.parent_path() / (base.stem().string() + "_x" + std::to_string(i) + ".csv");
        }
        write_grid_csv(csv.string(), e.surface);
        meta["surface_csv"] = csv.filename().string();
      }
      results.push_back(std::move(meta));
    }
    write_json(out, xs.size() == 1 ? results.front() : ojson{{"estimates", results}}, out_stream);
    return 0;
  }
};

// --- fpca -----------------------------------------------------------------

struct FpcaCmd
{
  std::string in;
  std::string out = "fpca";
  std::size_t components = 5;
  std::string covariance;
  EstimatorFlags est;

  void attach(CLI::App* app)
  {
    app->add_option("--in", in, "Input CSV y1,y2,x");
    app->add_option("--out", out, "Output prefix for eigenfunctions and the mean surface");
    app->add_option("--components", components, "Eigenfunctions to write");
    app->add_option("--covariance", covariance, "Also write the covariance kernel CSV here");
    est.attach(app);
  }

  int operator()(const CLI::App* app, std::ostream& out_stream) const
  {
    const auto sample = load_input(in);
    const auto cfg = est.resolve(app);
    const auto fit = KlFit::from_sample(sample, cfg);
    const auto& es = fit.eigensystem();
    const auto count = std::min(components, es.size());
    write_eigensystem(out, es, count);
    write_grid_csv(out + "_mean.csv", fit.mean());
    if (!covariance.empty()) {
      write_covariance_csv(covariance, covariance_field(fit.ensemble(), fit.mean()));
    }
    const auto& k = fit.k_choice();
    ojson j;
    j["K"] = k.K;
    j["cvp"] = k.cvp;
    j["degenerate_spectrum"] = k.degenerate;
    if (!k.gap_warning.empty()) {
      j["gap_warning"] = k.gap_warning;
    }
    const auto shown = std::min<std::size_t>(es.size(), 20);
    j["spectrum"] = std::vector<double>(es.eigenvalues.begin(), es.eigenvalues.begin() + static_cast<std::ptrdiff_t>(shown));
    j["total_variance"] = es.total_variance();
    const auto& bw = fit.bandwidths();
    j["bandwidths"] = {{"h", bw.h}, {"g1", bw.g1}, {"g2", bw.g2}, {"h_alpha", bw.h_alpha}};
    j["ties"] = fit.ties();
    j["config"] = cfg.to_json();
    out_stream << j.dump(2) << "\n";
    return 0;
  }
};

// --- benchmark ------------------------------------------------------------

struct BenchmarkCmd
{
  std::string experiment = "consistency";
  std::string config;
  std::size_t replications = 0;
  std::vector<std::size_t> ladder;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool raw = false;
  bool print_config = false;

  void attach(CLI::App* app)
  {
    app->add_option("--experiment", experiment,
                    "consistency | bridge | perturbation | uniformity | benchmark | all");
    app->add_option("--config", config, "Experiment config JSON (e.g. a report's embedded config)");
    app->add_option("--replications", replications, "Override R");
    app->add_option("--n-ladder", ladder, "Override the sample-size ladder")->delimiter(',');
    app->add_option("--seed", seed, "Override the seed");
    app->add_option("--out", out, "Report prefix (default report_<id>)");
    app->add_flag("--raw", raw, "also write per-replication metrics CSV");
    app->add_flag("--print-config", print_config, "print the resolved config and exit");
  }

  int operator()(std::ostream& out_stream, std::ostream& err) const
  {
    std::vector<ExperimentConfig> runs;
    if (!config.empty()) {
      auto j = read_json_file(config);
      runs.push_back(experiment_config_from_json(j.contains("config") ? j.at("config") : j));
    } else if (experiment == "all") {
      for (const char* id : {"consistency", "bridge", "perturbation", "uniformity", "benchmark"}) {
        runs.push_back(default_experiment(id));
      }
    } else {
      runs.push_back(default_experiment(experiment));
    }
    bool all_passed = true;
    for (auto& cfg : runs) {
      if (replications > 0) {
        cfg.replications = replications;
      }
      if (!ladder.empty()) {
        cfg.n_ladder = ladder;
      }
      if (seed) {
        cfg.seed = *seed;
      }
      cfg.validate();
      if (print_config) {
        out_stream << cfg.to_json().dump(2) << "\n";
        continue;
      }
      const auto rep = run_experiment(cfg);
      std::string prefix = out.empty() ? "report_" + cfg.id : out;
      if (!out.empty() && runs.size() > 1) {
        prefix += "_" + cfg.id;
      }
      write_report(prefix, rep, raw);
      out_stream << rep.to_text();
      err << cfg.id << ": " << rep.runtime_seconds << " s, report " << prefix << ".json\n";
      all_passed = all_passed && rep.passed();
    }
    if (!print_config) {
      out_stream << (all_passed ? "all checks passed" : "some checks failed") << "\n";
    }
    return 0;
  }
};

// --- diagnose -------------------------------------------------------------

struct DiagnoseCmd
{
  std::string in;
  std::vector<double> xs;
  std::string out;
  EstimatorFlags est;

  void attach(CLI::App* app)
  {
    app->add_option("--in", in, "Input CSV y1,y2,x");
    app->add_option("--x", xs, "Covariate values to check the kernel weights at");
    app->add_option("--out", out, "Write the diagnostics JSON here instead of stdout");
    est.attach(app);
  }

  int operator()(const CLI::App* app, std::ostream& out_stream) const
  {
    const auto s = load_input(in);
    s.validate();
    const auto cfg = est.resolve(app);
    ojson j;
    j["n"] = s.size();
    j["ties"] = {{"y1", count_ties(s.y1)}, {"y2", count_ties(s.y2)}, {"x", count_ties(s.x)}};
    if (s.size() >= 2) {
      j["x_summary"] = {{"min", *std::min_element(s.x.begin(), s.x.end())},
                        {"median", median(s.x)},
                        {"max", *std::max_element(s.x.begin(), s.x.end())},
                        {"sd", stddev(s.x)}};
      j["kendall_tau_y1_y2"] = kendall_tau(s.y1, s.y2);
    }
    const auto h = cfg.h ? *cfg.h : rule_of_thumb_bandwidth(s.x, cfg.bandwidth_constant);
    j["h"] = h;
    j["h_source"] = cfg.h ? "given" : "rule of thumb";
    const KernelSpec k{cfg.kernel, h};
    std::size_t lonely = 0;
    std::vector<double> ess;
    for (double x : s.x) {
      const auto w = nw_weights(x, s.x, k);
      double sq = 0.0;
      for (double wi : w.w) {
        sq += wi * wi;
      }
      const double e = sq > 0.0 ? 1.0 / sq : 0.0;
      ess.push_back(e);
      if (e < 2.0) {
        ++lonely;
      }
    }
    j["effective_sample_size_at_data"] = {{"min", *std::min_element(ess.begin(), ess.end())},
                                          {"median", median(ess)}};
    j["points_with_ess_below_2"] = lonely;
    auto at = ojson::array();
    for (double x : xs) {
      const auto w = nw_weights(x, s.x, k);
      double sq = 0.0;
      for (double wi : w.w) {
        sq += wi * wi;
      }
      at.push_back({{"x", x},
                    {"degenerate", w.degenerate},
                    {"effective_sample_size", w.degenerate ? 0.0 : 1.0 / sq}});
    }
    if (!xs.empty()) {
      j["weights_at"] = at;
    }
    try {
      const auto p = pseudo_observations(s, KernelSpec{cfg.kernel, cfg.g1.value_or(h)},
                                         KernelSpec{cfg.kernel, cfg.g2.value_or(h)},
                                         cfg.leave_one_out);
      j["pseudo_observations"] = {{"ks_margin1", ks_uniform(p.e1)},
                                  {"ks_margin2", ks_uniform(p.e2)},
                                  {"ks_critical_5pct", ks_critical_value(p.size(), 0.05)},
                                  {"ties", p.ties}};
    } catch (const NumericalError& e) {
      j["pseudo_observations"] = {{"error", e.what()}};
    }
    write_json(out, j, out_stream);
    return 0;
  }
};

} // namespace

int workers_from_env()
{
  const char* v = std::getenv("CCFPCA_WORKERS");
  if (v == nullptr || *v == '\0') {
    return 0;
  }
  char* end = nullptr;
  const long w = std::strtol(v, &end, 10);
  if (*end != '\0' || w < 1) {
    throw ValidationError("CCFPCA_WORKERS must be a positive integer");
  }
  return static_cast<int>(w);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
  CLI::App app{"Conditional copula estimation by functional PCA", "ccfpca"};
  // `-h` would clash with the bandwidth flag `--h`.
  app.set_help_flag("--help", "Print this help message and exit");
  app.set_version_flag("--version", CCFPCA_VERSION);
  app.require_subcommand(1);
  app.fallthrough();
  app.failure_message(CLI::FailureMessage::help);
  int workers = 0;
  app.add_option("--workers", workers, "OpenMP worker count (default: CCFPCA_WORKERS or all cores)");

  SimulateCmd simulate;
  EstimateCmd estimate;
  FpcaCmd fpca;
  BenchmarkCmd benchmark;
  DiagnoseCmd diagnose;
  auto* sim_app = app.add_subcommand("simulate", "Draw a sample from a conditional copula model");
  auto* est_app = app.add_subcommand("estimate", "Estimate C_x at one or more covariate values");
  auto* fpca_app = app.add_subcommand("fpca", "Write the fitted eigenfunctions and spectrum");
  auto* bench_app = app.add_subcommand("benchmark", "Run Monte Carlo experiments and write reports");
  auto* diag_app = app.add_subcommand("diagnose", "Summarise a sample and its kernel weights");
  simulate.attach(sim_app);
  estimate.attach(est_app);
  fpca.attach(fpca_app);
  benchmark.attach(bench_app);
  diagnose.attach(diag_app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (workers < 0) {
      throw ValidationError("--workers must be positive");
    }
    if (workers == 0) {
      workers = workers_from_env();
    }
    if (workers > 0) {
      omp_set_num_threads(workers);
    }
    if (*sim_app) {
      return simulate(out);
    }
    if (*est_app) {
      return estimate(est_app, out);
    }
    if (*fpca_app) {
      return fpca(fpca_app, out);
    }
    if (*bench_app) {
      return benchmark(out, err);
    }
    return diagnose(diag_app, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 2;
  }
}

} // namespace ccfpca::cli
