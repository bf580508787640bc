#pragma once

#include "ccfpca/conditional.hpp"
#include "ccfpca/fpca.hpp"
#include "ccfpca/score_regression.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ccfpca {

enum class Centering
{
  //! Centre trajectories at the rank-based partial copula estimate.
  PartialCopula,
  //! Centre at the pointwise average of the trajectories.
  EnsembleAverage,
};

//! Every knob of the estimation pipeline. Bandwidths left empty resolve to
//! the rule of thumb sd(X) n^{-1/5}; the resolved values are reported back.
struct PipelineConfig
{
  std::size_t grid = 21;
  KernelFamily kernel = KernelFamily::Epanechnikov;
  std::optional<double> h;
  std::optional<double> g1;
  std::optional<double> g2;
  std::optional<double> h_alpha;
  double bandwidth_constant = 1.0;
  //! Score-regression bandwidth c sd(X) n^{-2/5} when h_alpha is not set.
  bool undersmooth = false;
  //! Pick h_alpha by leave-one-out CV over a log-spaced grid around the
  //! rule of thumb (ignored when h_alpha is set).
  bool cv_alpha = false;
  KSelection k_method = KSelection::Cvp;
  //! CVP threshold, or K itself for KSelection::Fixed.
  double k_param = 0.9;
  Centering centering = Centering::PartialCopula;
  bool leave_one_out = false;
  bool project = true;

  nlohmann::ordered_json to_json() const;
};

//! Inverse of PipelineConfig::to_json; missing keys keep their defaults.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

struct ResolvedBandwidths
{
  double h = 0.0;
  double g1 = 0.0;
  double g2 = 0.0;
  double h_alpha = 0.0;
};

struct ConditionalCopulaEstimate
{
  double x = 0.0;
  GridFunction surface;
  std::size_t K = 0;
  bool projected = false;
  std::vector<double> alpha;
  ResolvedBandwidths bandwidths;
  std::vector<double> spectrum;
  double cvp = 0.0;
  bool degenerate_spectrum = false;
  std::string gap_warning;
  std::size_t ties = 0;

  //! Bilinear interpolation of the surface at an off-grid point.
  double at(double u, double v) const { return surface.interpolate(u, v); }
};

//! The fitted FPCA model: everything that does not depend on the
//! evaluation point x. Fitted once, then evaluated at many x concurrently.
class KlFit
{
public:
  //! Full pipeline from raw data.
  static KlFit from_sample(const Sample& s, const PipelineConfig& cfg);
  //! FPCA on a supplied ensemble (oracle trajectories) with a supplied mean.
  static KlFit from_ensemble(TrajectoryEnsemble ensemble, const GridFunction& mean,
                             const PipelineConfig& cfg);

  ConditionalCopulaEstimate evaluate(double x) const;
  //! Same as evaluate, with the component count overridden (K <= pairs).
  ConditionalCopulaEstimate evaluate(double x, std::size_t K) const;

  const GridFunction& mean() const { return mean_; }
  const GridFunction& partial_copula() const { return partial_; }
  const TrajectoryEnsemble& ensemble() const { return ensemble_; }
  const EigenSystem& eigensystem() const { return es_; }
  const KChoice& k_choice() const { return k_; }
  const ResolvedBandwidths& bandwidths() const { return bw_; }
  const PipelineConfig& config() const { return cfg_; }
  const ScoreRegressor& regressor() const { return *regressor_; }
  std::size_t ties() const { return ties_; }
  //! The kernel-weighted copula estimate at x built from the same
  //! pseudo-observations and bandwidth (only for fits made from a sample).
  GridFunction baseline(double x) const;

private:
  KlFit(PipelineConfig cfg, TrajectoryEnsemble ensemble, GridFunction partial, GridFunction mean,
        ResolvedBandwidths bw, std::size_t ties);

  PipelineConfig cfg_;
  TrajectoryEnsemble ensemble_;
  GridFunction partial_;
  GridFunction mean_;
  ResolvedBandwidths bw_;
  std::size_t ties_ = 0;
  EigenSystem es_;
  KChoice k_;
  std::optional<ScoreRegressor> regressor_;
  std::optional<TrajectoryBuilder> builder_;
};

ConditionalCopulaEstimate estimate_conditional_copula(double x, const Sample& s,
                                                      const PipelineConfig& cfg);

//! Clamps every node into the Frechet-Hoeffding band
//! [max(u + v - 1, 0), min(u, v)].
GridFunction frechet_project(const GridFunction& f);

//! Kernel-weighted copula at x straight from the data; the baseline the
//! FPCA estimator is compared against.
GridFunction baseline_estimate(double x, const Sample& s, const PipelineConfig& cfg);

nlohmann::ordered_json estimate_metadata(const ConditionalCopulaEstimate& e,
                                         const PipelineConfig& cfg);

} // namespace ccfpca
