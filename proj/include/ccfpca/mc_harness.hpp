#pragma once

#include "ccfpca/copula_sim.hpp"
#include "ccfpca/kl_estimator.hpp"

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace ccfpca {

//! Two lattice points and the tolerance for their bridge covariance.
struct PointPair
{
  double u1 = 0.5;
  double v1 = 0.5;
  double u2 = 0.5;
  double v2 = 0.5;
  double tolerance = 0.02;
};

struct ExperimentConfig
{
  std::string id;
  //! Copula-model experiments.
  ConditionalModel model;
  //! Synthetic KL experiments.
  std::vector<double> kl_eigenvalues{0.4, 0.2, 0.05};
  double kl_link_strength = 0.5;
  std::vector<std::size_t> n_ladder;
  std::size_t replications = 1;
  std::uint64_t seed = 1;
  PipelineConfig estimator;
  std::vector<double> eval_points{0.5};
  std::vector<PointPair> point_pairs;
  //! Named pass/fail thresholds; see each experiment for the names it reads.
  std::map<std::string, double> tolerances;

  double tolerance(const std::string& name) const;
  //! R >= 1, ladder non-empty and strictly increasing.
  void validate() const;
  nlohmann::ordered_json to_json() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

struct Check
{
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ExperimentReport
{
  std::string id;
  nlohmann::ordered_json config;
  std::string config_hash;
  std::string version;
  //! Replication seeds per ladder step.
  nlohmann::ordered_json seeds;
  //! Summary rows (one object per row, identical keys).
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  //! Per-replication metrics, one object per (n, replication).
  nlohmann::ordered_json raw = nlohmann::ordered_json::array();
  std::vector<Check> checks;
  //! Caveats printed with the report.
  std::vector<std::string> notes;
  //! Wall time; kept out of the serialised report so reruns are byte-identical.
  double runtime_seconds = 0.0;

  bool passed() const;
  const Check* find(const std::string& name) const;
  nlohmann::ordered_json to_json(bool include_raw = false) const;
  //! Aligned-column human report.
  std::string to_text() const;
};

//! Writes `<prefix>.json`, `<prefix>.txt` and, when requested, `<prefix>_raw.csv`.
void write_report(const std::string& prefix, const ExperimentReport& r, bool raw_csv);

//! FNV-1a 64 of the config JSON, as 16 hex digits.
std::string config_hash(const nlohmann::ordered_json& config);

//! E_X[C_X(u, v)] by midpoint quadrature over the covariate law.
double true_partial_copula(const ConditionalModel& m, double u, double v);

//! Median sup-grid error of the FPCA estimate vs the true C_x along the
//! ladder. Tolerances: `final_sup_error`. Checks: strictly decreasing
//! medians, final median below the bound.
ExperimentReport consistency_experiment(const ExperimentConfig& cfg);

//! Known-margins empirical process sqrt(n)(C_n - C) at the configured point
//! pairs; empirical covariance across replications vs
//! C(u ^ u', v ^ v') - C(u, v) C(u', v'). Uses n_ladder.back().
ExperimentReport bridge_covariance_experiment(const ExperimentConfig& cfg);

//! Synthetic KL model with oracle mean: residual
//! ||sqrt(n)(phiHat_1 - phi_1) - T_{1,n}||, the exact eigenfunction identity,
//! eigenvalue error and ||sqrt(n)(mean of C_i - mean)||. Tolerances:
//! `residual_factor` (end-to-end shrink), `clt_band` (relative change between
//! ladder steps), `identity` (max identity residual).
ExperimentReport eigen_perturbation_experiment(const ExperimentConfig& cfg);

//! KS distance of the known-margins transforms from uniform and the sup
//! gaps between the rank-based copula and (a) the known-margins empirical
//! CDF, (b) the normalised-rank empirical CDF, on a 101 x 101 lattice.
//! Tolerances: `ks_alpha`, `ks_pass_fraction`.
ExperimentReport uniformity_and_gap_experiment(const ExperimentConfig& cfg);

//! FPCA estimator vs the direct kernel-weighted copula estimate: ISE and
//! sup error per (n, x). Checks that both medians decrease along the ladder.
ExperimentReport benchmark_vs_baseline(const ExperimentConfig& cfg);

//! Dispatch by experiment id: consistency, bridge, perturbation,
//! uniformity, benchmark.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

//! Shipped defaults for each experiment id.
ExperimentConfig default_experiment(const std::string& id);

} // namespace ccfpca
