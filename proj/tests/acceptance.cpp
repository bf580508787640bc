// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.
#include "ccfpca/cli.hpp"
#include "ccfpca/copula_sim.hpp"
#include "ccfpca/fpca.hpp"
#include "ccfpca/mc_harness.hpp"
#include "ccfpca/stats.hpp"

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace ccfpca;
namespace fs = std::filesystem;

namespace {

struct Outcome
{
  bool passed = false;
  std::string measured;
};

int failures = 0;

void criterion(int id, const char* title, double limit_s, const std::function<Outcome()>& body)
{
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = limit_s <= 0.0 || secs < limit_s;
  const bool ok = o.passed && in_time;
  failures += ok ? 0 : 1;
  char timing[96];
  if (limit_s > 0.0) {
    std::snprintf(timing, sizeof timing, "%.1f s (limit %.0f s)", secs, limit_s);
  } else {
    std::snprintf(timing, sizeof timing, "%.1f s", secs);
  }
  std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << id << ": " << title << " | " << o.measured
            << " | " << timing << std::endl;
}

std::string num(double v)
{
  char b[32];
  std::snprintf(b, sizeof b, "%.4g", v);
  return b;
}

Outcome from_checks(const ExperimentReport& rep, const std::vector<std::string>& names)
{
  Outcome o{true, ""};
  for (const auto& n : names) {
    const auto* c = rep.find(n);
    if (c == nullptr) {
      o.passed = false;
      o.measured += n + ": missing; ";
      continue;
    }
    o.passed = o.passed && c->passed;
    o.measured += n + ": " + c->detail + "; ";
  }
  if (!o.measured.empty()) {
    o.measured.resize(o.measured.size() - 2);
  }
  return o;
}

GridFunction random_unit(const Grid2D& g, Rng& rng)
{
  std::vector<double> v(g.num_nodes());
  for (auto& x : v) {
    x = rng.normal();
  }
  const GridFunction f(g, std::move(v));
  return f * (1.0 / l2_norm(f));
}

Outcome exact_identities()
{
  const Grid2D g(21);
  Rng rng(2024, 7);
  double lemma = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto [l, r] = eigenfunction_identity_check(random_unit(g, rng), random_unit(g, rng));
    lemma = std::max(lemma, std::abs(l - r));
  }

  const auto sim = sample_conditional(default_experiment("consistency").model, 300, 11);
  PipelineConfig cfg;
  cfg.grid = 21;
  cfg.project = false;
  const auto fit = KlFit::from_sample(sim.sample, cfg);
  const auto& es = fit.eigensystem();
  const auto& ens = fit.ensemble();

  double ortho = 0.0;
  for (std::size_t j = 0; j < es.size(); ++j) {
    for (std::size_t k = j; k < es.size(); ++k) {
      const double ip = inner_product(es.eigenfunctions[j], es.eigenfunctions[k]);
      ortho = std::max(ortho, std::abs(ip - (j == k ? 1.0 : 0.0)));
    }
  }
  const auto cov = covariance_field(ens, fit.mean());
  double lsum = 0.0;
  for (double l : es.eigenvalues) {
    lsum += l;
  }
  const double trace_rel = std::abs(lsum - cov.trace()) / cov.trace();

  const auto sc = scores(ens, fit.mean(), es, es.size());
  double recon = 0.0;
  for (std::size_t i = 0; i < ens.size(); ++i) {
    auto r = fit.mean();
    for (std::size_t k = 0; k < es.size(); ++k) {
      r = r + es.eigenfunctions[k] * sc.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    }
    recon = std::max(recon, l2_distance(r, ens.trajs[i]));
  }
  return {lemma <= 1e-10 && ortho <= 1e-8 && trace_rel <= 1e-8 && recon <= 1e-8,
          "identity " + num(lemma) + ", orthonormality " + num(ortho) + ", trace rel " + num(trace_rel) +
            ", reconstruction " + num(recon)};
}

Outcome rank_one_round_trip()
{
  const Grid2D g(21);
  const auto phi = cosine_tensor(g, 1, 1);
  const auto es = eigendecompose(CovarianceField::outer(phi, phi, 0.3));
  const double lerr = std::abs(es.eigenvalues[0] - 0.3);
  const double ferr = l2_distance(align_sign(es.eigenfunctions[0], phi), phi);
  return {lerr <= 1e-8 && ferr <= 1e-6, "|lambda1 - 0.3| " + num(lerr) + ", ||phi1_hat - phi1|| " + num(ferr)};
}

Outcome determinism()
{
  const auto dir = fs::temp_directory_path() / "ccfpca_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto call = [](std::vector<std::string> args) {
    args.insert(args.begin(), "ccfpca");
    std::vector<const char*> argv;
    for (const auto& a : args) {
      argv.push_back(a.c_str());
    }
    std::ostringstream out;
    std::ostringstream err;
    return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  };
  const std::vector<std::string> outputs{"d.csv", "d.truth.json", "e.json", "e.csv", "f.json", "f_phi1.csv",
                                         "f_mean.csv", "b.json", "b.txt", "b_raw.csv"};
  std::vector<std::string> reference;
  int runs = 0;
  int mismatches = 0;
  for (const char* workers : {"1", "1", "2", "4"}) {
    const auto sub = dir / (std::string("run") + std::to_string(runs));
    fs::create_directories(sub);
    const auto p = [&](const char* name) { return (sub / name).string(); };
    int rc = 0;
    rc |= call({"--workers", workers, "simulate", "--n", "400", "--seed", "17", "--epsilons", "--out", p("d.csv")});
    rc |= call({"--workers", workers, "estimate", "--in", p("d.csv"), "--x", "0.5", "--cv-alpha", "--out",
                p("e.json")});
    rc |= call({"--workers", workers, "fpca", "--in", p("d.csv"), "--components", "3", "--out", p("f")});
    rc |= call({"--workers", workers, "benchmark", "--experiment", "consistency", "--replications", "4",
                "--n-ladder", "100,200", "--raw", "--out", p("b")});
    if (rc != 0) {
      return {false, "a command failed with workers = " + std::string(workers)};
    }
    std::vector<std::string> contents;
    for (const auto& f : outputs) {
      contents.push_back(slurp(sub / f));
    }
    if (reference.empty()) {
      reference = contents;
    } else {
      for (std::size_t i = 0; i < outputs.size(); ++i) {
        mismatches += contents[i] == reference[i] && !contents[i].empty() ? 0 : 1;
      }
    }
    ++runs;
  }
  return {mismatches == 0, std::to_string(outputs.size()) + " files x " + std::to_string(runs) +
                             " runs (workers 1,1,2,4), " + std::to_string(mismatches) + " mismatches"};
}

} // namespace

int main()
{
  std::cout << "ccfpca acceptance (" << omp_get_num_procs() << " cores)" << std::endl;

  criterion(1, "exact identities", 10, exact_identities);
  criterion(2, "rank-1 covariance round trip", 5, rank_one_round_trip);

  criterion(3, "pseudo-margin uniformity, n = 1000, 100 seeds", 30, [] {
    auto cfg = default_experiment("uniformity");
    cfg.n_ladder = {1000};
    cfg.replications = 100;
    return from_checks(run_experiment(cfg), {"ks_uniform_margin1@n=1000", "ks_uniform_margin2@n=1000"});
  });

  criterion(4, "empirical copula vs known-margin ECDF gap <= 2/n, 50 seeds", 60, [] {
    auto cfg = default_experiment("uniformity");
    cfg.n_ladder = {50, 200, 1000};
    cfg.replications = 50;
    const auto rep = run_experiment(cfg);
    auto o = from_checks(rep, {"gap_known_margins@n=50", "gap_known_margins@n=200", "gap_known_margins@n=1000"});
    const auto rank = from_checks(rep, {"gap_rank_ecdf@n=50", "gap_rank_ecdf@n=200", "gap_rank_ecdf@n=1000"});
    o.measured += " [rank-ECDF gap " + std::string(rank.passed ? "within" : "outside") + " 2/n]";
    return o;
  });

  criterion(5, "bridge covariance, independence, n = 500, R = 2000", 120, [] {
    const auto rep = run_experiment(default_experiment("bridge"));
    return from_checks(rep, {"bridge_cov((0.5,0.5),(0.5,0.5))", "bridge_cov((0.25,0.25),(0.75,0.75))"});
  });

  criterion(6, "eigenfunction perturbation residual, G = 15", 180, [] {
    const auto rep = run_experiment(default_experiment("perturbation"));
    return from_checks(rep, {"residual_shrink", "eigenfunction_identity", "mean_clt_stability"});
  });

  criterion(7, "consistency at x = 0.5 against the calibrated bound", 600, [] {
    const auto rep = run_experiment(default_experiment("consistency"));
    return from_checks(rep, {"sup_error_decreasing@x=0.5", "final_sup_error@x=0.5"});
  });

  criterion(8, "benchmark against the baseline estimator", 600, [] {
    const auto rep = run_experiment(default_experiment("benchmark"));
    std::vector<std::string> names;
    for (const auto& c : rep.checks) {
      names.push_back(c.name);
    }
    auto o = from_checks(rep, names);
    o.passed = o.passed && names.size() == 12;
    return o;
  });

  criterion(9, "byte-identical outputs across runs and worker counts", 0, determinism);

  std::cout << (failures == 0 ? "acceptance: all criteria passed" : "acceptance: " + std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
