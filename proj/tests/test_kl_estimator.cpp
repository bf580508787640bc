#include "doctest.h"
#include "support.hpp"

#include "ccfpca/copula_sim.hpp"
#include "ccfpca/error.hpp"
#include "ccfpca/kl_estimator.hpp"

using namespace ccfpca;

namespace {

PipelineConfig plain_config()
{
  PipelineConfig cfg;
  cfg.project = false;
  return cfg;
}

Sample clayton_sample(std::size_t n, std::uint64_t seed)
{
  ConditionalModel m;
  m.family = CopulaFamily::Clayton;
  m.link = TauLink::parse("sine:0.25,0.4");
  return sample_conditional(m, n, seed).sample;
}

} // namespace

TEST_SUITE("kl_estimator")
{
  TEST_CASE("K = 0 reproduces the partial copula")
  {
    const auto s = clayton_sample(300, 1);
    auto cfg = plain_config();
    cfg.k_method = KSelection::Fixed;
    cfg.k_param = 0;
    const auto fit = KlFit::from_sample(s, cfg);
    const auto pseudo = pseudo_observations(s, {cfg.kernel, fit.bandwidths().g1},
                                            {cfg.kernel, fit.bandwidths().g2});
    const auto partial = EmpiricalCopula(pseudo).on_grid(Grid2D(cfg.grid));
    for (double x : {0.2, 0.5, 0.8}) {
      const auto e = fit.evaluate(x);
      CHECK(e.K == 0);
      CHECK(testing::bit_equal(e.surface, partial));
    }
  }

  TEST_CASE("antithetic pairs give zero regressed scores")
  {
    const auto g = make_grid(9);
    const auto m = testing::random_function(g, 12);
    const auto phi = testing::random_unit(g, 13);
    TrajectoryEnsemble e;
    e.mode = TrajectoryMode::Oracle;
    for (int i = 0; i < 20; ++i) {
      const double x = (i + 0.5) / 20.0;
      for (double s : {1.0, -1.0}) {
        e.xs.push_back(x);
        e.trajs.push_back(m + phi * (s * (1.0 + x)));
      }
    }
    auto cfg = plain_config();
    cfg.grid = 9;
    cfg.k_method = KSelection::Fixed;
    cfg.k_param = 1;
    cfg.h_alpha = 0.2;
    const auto fit = KlFit::from_ensemble(e, m, cfg);
    CHECK(l2_distance(align_sign(fit.eigensystem().eigenfunctions[0], phi), phi) <= 1e-8);
    for (double x : {0.1, 0.5, 0.9}) {
      const auto est = fit.evaluate(x);
      CHECK(std::abs(est.alpha[0]) <= 1e-12);
      CHECK(sup_distance(est.surface, m) <= 1e-12);
    }
  }

  TEST_CASE("rank-one oracle model is recovered")
  {
    const auto g = make_grid(15);
    const auto model = SyntheticKLModel::standard(g, {0.1}, 0.8);
    auto cfg = plain_config();
    cfg.grid = 15;
    cfg.k_method = KSelection::Fixed;
    cfg.k_param = 1;
    std::vector<double> err;
    for (std::uint64_t r = 0; r < 50; ++r) {
      const auto d = synthetic_kl_sample(model, 2000, derive_seed(400, r));
      const auto fit = KlFit::from_ensemble(d.ensemble, model.mean(), cfg);
      err.push_back(sup_distance(fit.evaluate(0.5).surface, model.conditional_surface(0.5)));
    }
    CHECK(median(err) <= 0.05);
  }

  TEST_CASE("L2 error decreases as true components are added")
  {
    const auto g = make_grid(11);
    const auto model = SyntheticKLModel::standard(g, {0.4, 0.2, 0.05}, 0.8);
    auto cfg = plain_config();
    cfg.grid = 11;
    cfg.k_method = KSelection::Fixed;
    cfg.k_param = 3;
    std::vector<std::vector<double>> err(4);
    for (std::uint64_t r = 0; r < 20; ++r) {
      const auto d = synthetic_kl_sample(model, 2000, derive_seed(500, r));
      const auto fit = KlFit::from_ensemble(d.ensemble, model.mean(), cfg);
      for (std::size_t K = 0; K <= 3; ++K) {
        err[K].push_back(l2_distance(fit.evaluate(0.5, K).surface, model.conditional_surface(0.5)));
      }
    }
    for (std::size_t K = 0; K < 3; ++K) {
      CHECK(median(err[K + 1]) < median(err[K]));
    }
  }

  TEST_CASE("Frechet projection")
  {
    const auto g = make_grid(4);
    const GridFunction big(g, 2.0);
    const auto p = frechet_project(big);
    for (std::size_t a = 0; a < 4; ++a) {
      for (std::size_t b = 0; b < 4; ++b) {
        CHECK(p(a, b) == std::min(g.node(a), g.node(b)));
      }
    }
    const auto q = frechet_project(GridFunction(g, -1.0));
    CHECK(q(3, 3) == doctest::Approx(g.node(3) * 2 - 1.0));
    CHECK(q(0, 0) == 0.0);

    ConditionalModel m;
    const auto truth = true_conditional_copula(m, 0.3, g);
    CHECK(testing::bit_equal(frechet_project(truth), truth));
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto f = truth + testing::random_function(g, s) * 0.2;
      const auto pf = frechet_project(f);
      CHECK(testing::bit_equal(frechet_project(pf), pf));
      CHECK(l2_distance(pf, truth) <= l2_distance(f, truth) + 1e-15);
      CHECK(sup_distance(pf, truth) <= sup_distance(f, truth) + 1e-15);
    }
  }

  TEST_CASE("projection flag is honoured")
  {
    const auto s = clayton_sample(200, 3);
    PipelineConfig cfg;
    const auto e = estimate_conditional_copula(0.5, s, cfg);
    CHECK(e.projected);
    CHECK(testing::bit_equal(frechet_project(e.surface), e.surface));
  }

  TEST_CASE("results do not depend on the thread count")
  {
    const auto s = clayton_sample(400, 4);
    auto cfg = plain_config();
    cfg.cv_alpha = true;
    std::optional<ConditionalCopulaEstimate> ref;
    for (int t : {1, 2, 4}) {
      testing::ThreadCount tc(t);
      const auto e = estimate_conditional_copula(0.4, s, cfg);
      if (!ref) {
        ref = e;
      } else {
        CHECK(testing::bit_equal(e.surface, ref->surface));
        CHECK(e.K == ref->K);
        CHECK(e.bandwidths.h_alpha == ref->bandwidths.h_alpha);
      }
    }
  }

  TEST_CASE("config JSON round trip and validation")
  {
    PipelineConfig cfg;
    cfg.grid = 13;
    cfg.kernel = KernelFamily::Gaussian;
    cfg.h = 0.11;
    cfg.h_alpha = 0.2;
    cfg.k_method = KSelection::Scree;
    cfg.centering = Centering::EnsembleAverage;
    cfg.leave_one_out = true;
    cfg.project = false;
    const auto j = cfg.to_json();
    CHECK(j.at("g1") == "auto");
    const auto back = pipeline_config_from_json(nlohmann::json::parse(j.dump()));
    CHECK(back.to_json() == j);
    CHECK_THROWS_AS(pipeline_config_from_json(nlohmann::json{{"h", "wide"}}), ValidationError);
    CHECK_THROWS_AS(pipeline_config_from_json(nlohmann::json{{"grid", "x"}}), ValidationError);
    CHECK_THROWS_AS(pipeline_config_from_json(nlohmann::json{{"centering", "median"}}), ValidationError);
  }

  TEST_CASE("requests beyond the stored components fail")
  {
    const auto fit = KlFit::from_sample(clayton_sample(150, 5), plain_config());
    CHECK_NOTHROW(fit.evaluate(0.5, 16));
    CHECK_THROWS_AS(fit.evaluate(0.5, 10000), ValidationError);
  }

  TEST_CASE("baseline equals the direct trajectory")
  {
    const auto s = clayton_sample(250, 6);
    const auto cfg = plain_config();
    const auto fit = KlFit::from_sample(s, cfg);
    CHECK(testing::bit_equal(fit.baseline(0.3), baseline_estimate(0.3, s, cfg)));
    const auto g = make_grid(5);
    TrajectoryEnsemble e;
    e.xs = {0.1, 0.9};
    e.trajs = {GridFunction(g, 0.1), GridFunction(g, 0.2)};
    auto c5 = cfg;
    c5.grid = 5;
    c5.h_alpha = 1.0;
    c5.h = 1.0;
    CHECK_THROWS_AS(KlFit::from_ensemble(e, GridFunction(g, 0.0), c5).baseline(0.5), ValidationError);
  }
}
