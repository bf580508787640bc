#include "doctest.h"
#include "support.hpp"

#include "ccfpca/copula_sim.hpp"
#include "ccfpca/error.hpp"

#include <cmath>

using namespace ccfpca;

namespace {

// Kendall's tau from the CDF alone: 1 - 4 * int dC/du * dC/dv, with
// central differences on an m x m midpoint grid.
double numeric_tau(const CopulaModel& c, int m = 400)
{
  const double d = 1e-5;
  double s = 0.0;
  for (int a = 0; a < m; ++a) {
    const double u = (a + 0.5) / m;
    for (int b = 0; b < m; ++b) {
      const double v = (b + 0.5) / m;
      const double cu = (c.cdf(u + d, v) - c.cdf(u - d, v)) / (2 * d);
      const double cv = (c.cdf(u, v + d) - c.cdf(u, v - d)) / (2 * d);
      s += cu * cv;
    }
  }
  return 1.0 - 4.0 * s / (static_cast<double>(m) * m);
}

ConditionalModel constant_model(CopulaFamily fam, double tau)
{
  ConditionalModel m;
  m.family = fam;
  m.link = TauLink{TauLink::Kind::Constant, tau, 0.0};
  return m;
}

} // namespace

TEST_SUITE("copula_sim")
{
  TEST_CASE("boundary conditions of every family")
  {
    const std::vector<CopulaModel> models{{CopulaFamily::Independence, 0.0},
                                          {CopulaFamily::Clayton, 2.0},
                                          {CopulaFamily::Frank, -4.0},
                                          {CopulaFamily::Fgm, 0.7},
                                          {CopulaFamily::Gumbel, 1.8}};
    for (const auto& m : models) {
      CAPTURE(to_string(m.family));
      for (double t : {0.0, 0.13, 0.5, 0.91, 1.0}) {
        CHECK(m.cdf(t, 0.0) == 0.0);
        CHECK(m.cdf(0.0, t) == 0.0);
        CHECK(m.cdf(t, 1.0) == doctest::Approx(t).epsilon(1e-12));
        CHECK(m.cdf(1.0, t) == doctest::Approx(t).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("closed-form values")
  {
    CHECK(CopulaModel{CopulaFamily::Clayton, 2.0}.cdf(0.5, 0.5) == doctest::Approx(1.0 / std::sqrt(7.0)).epsilon(1e-14));
    CHECK(CopulaModel{CopulaFamily::Fgm, 1.0}.cdf(0.5, 0.5) == doctest::Approx(0.3125).epsilon(1e-14));
    CHECK(CopulaModel{CopulaFamily::Independence, 0.0}.cdf(0.3, 0.6) == doctest::Approx(0.18).epsilon(1e-14));
    const double gum = std::exp(-std::pow(2.0 * std::pow(-std::log(0.5), 2.0), 0.5));
    CHECK(CopulaModel{CopulaFamily::Gumbel, 2.0}.cdf(0.5, 0.5) == doctest::Approx(gum).epsilon(1e-13));
  }

  TEST_CASE("parameter ranges")
  {
    CHECK_THROWS_AS((CopulaModel{CopulaFamily::Clayton, 0.0}.validate()), ValidationError);
    CHECK_THROWS_AS((CopulaModel{CopulaFamily::Frank, 0.0}.validate()), ValidationError);
    CHECK_THROWS_AS((CopulaModel{CopulaFamily::Fgm, 1.5}.validate()), ValidationError);
    CHECK_THROWS_AS((CopulaModel{CopulaFamily::Gumbel, 0.5}.validate()), ValidationError);
    CHECK_THROWS_AS((CopulaModel{CopulaFamily::Clayton, std::nan("")}.validate()), ValidationError);
    CHECK_THROWS_AS(tau_to_theta(CopulaFamily::Fgm, 0.3), ValidationError);
    CHECK_THROWS_AS(tau_to_theta(CopulaFamily::Clayton, -0.1), ValidationError);
    CHECK_THROWS_AS(tau_to_theta(CopulaFamily::Gumbel, 1.0), ValidationError);
    CHECK_THROWS_AS(sample_conditional(constant_model(CopulaFamily::Clayton, 0.0), 10, 1), ValidationError);
    CHECK_THROWS_AS(parse_copula_family("t"), ValidationError);
  }

  TEST_CASE("tau to theta against a numerical Kendall tau")
  {
    CHECK(tau_to_theta(CopulaFamily::Clayton, 0.5) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(tau_to_theta(CopulaFamily::Fgm, 2.0 / 9.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(tau_to_theta(CopulaFamily::Gumbel, 0.5) == doctest::Approx(2.0).epsilon(1e-12));
    for (auto fam : {CopulaFamily::Clayton, CopulaFamily::Frank, CopulaFamily::Fgm, CopulaFamily::Gumbel}) {
      for (double tau : {-0.4, -0.1, 0.15, 0.4, 0.6}) {
        if (!tau_attainable(fam, tau)) {
          continue;
        }
        CAPTURE(to_string(fam));
        CAPTURE(tau);
        const double theta = tau_to_theta(fam, tau);
        CHECK(theta_to_tau(fam, theta) == doctest::Approx(tau).epsilon(1e-9));
        CHECK(std::abs(numeric_tau(CopulaModel{fam, theta}) - tau) <= 5e-3);
      }
    }
  }

  TEST_CASE("conditional inverse round trip")
  {
    const std::vector<CopulaModel> models{{CopulaFamily::Clayton, 4.0},
                                          {CopulaFamily::Frank, 7.0},
                                          {CopulaFamily::Frank, -3.0},
                                          {CopulaFamily::Fgm, -0.8},
                                          {CopulaFamily::Gumbel, 3.0}};
    for (const auto& m : models) {
      for (double u : {0.03, 0.3, 0.77, 0.98}) {
        for (double w : {0.01, 0.25, 0.5, 0.9, 0.999}) {
          CHECK(m.h(u, m.h_inverse(w, u)) == doctest::Approx(w).epsilon(1e-9));
        }
      }
    }
  }

  TEST_CASE("sampler contract")
  {
    ConditionalModel m;
    CHECK(sample_conditional(m, 0, 1).sample.size() == 0);
    const auto a = sample_conditional(m, 300, 42);
    const auto b = sample_conditional(m, 300, 42);
    CHECK(a.sample.y1 == b.sample.y1);
    CHECK(a.sample.y2 == b.sample.y2);
    CHECK(a.sample.x == b.sample.x);
    const auto c = sample_conditional(m, 300, 43);
    CHECK(a.sample.x != c.sample.x);
    {
      testing::ThreadCount tc(3);
      CHECK(sample_conditional(m, 300, 42).sample.y2 == a.sample.y2);
    }
    // A prefix of a larger sample is the smaller sample.
    const auto big = sample_conditional(m, 500, 42);
    CHECK(std::equal(a.sample.y1.begin(), a.sample.y1.end(), big.sample.y1.begin()));

    const auto ind = sample_conditional(constant_model(CopulaFamily::Independence, 0.0), 5000, 7);
    CHECK(std::abs(kendall_tau(ind.known.e1, ind.known.e2)) <= 0.03);
  }

  TEST_CASE("link functions")
  {
    const auto s = TauLink::parse("sine:0.25,0.4");
    CHECK(s(0.25) == doctest::Approx(0.65));
    CHECK(s(0.0) == doctest::Approx(0.4));
    CHECK(TauLink::parse(s.to_string())(0.1) == s(0.1));
    CHECK(TauLink::parse("const:0.3")(0.9) == 0.3);
    CHECK_THROWS_AS(TauLink::parse("cubic:1"), ValidationError);
  }

  TEST_CASE("true conditional copula follows the link")
  {
    const auto g = make_grid(7);
    ConditionalModel m;
    for (double x : {0.1, 0.5, 0.85}) {
      const auto c = true_conditional_copula(m, x, g);
      const auto cop = m.copula_at(x);
      CHECK(cop.theta == doctest::Approx(tau_to_theta(m.family, m.link(x))));
      for (std::size_t a = 0; a < 7; ++a) {
        for (std::size_t b = 0; b < 7; ++b) {
          CHECK(c(a, b) == cop.cdf(g.node(a), g.node(b)));
        }
      }
    }
    const auto ind = true_conditional_copula(constant_model(CopulaFamily::Independence, 0.0), 0.4, g);
    CHECK(ind(2, 5) == doctest::Approx(g.node(2) * g.node(5)).epsilon(1e-15));
  }

  TEST_CASE("large-sample ECDF of the known pseudo-observations")
  {
    const std::vector<std::pair<CopulaFamily, double>> cases{{CopulaFamily::Clayton, 0.5},
                                                             {CopulaFamily::Frank, -0.3},
                                                             {CopulaFamily::Fgm, 0.2},
                                                             {CopulaFamily::Gumbel, 0.4},
                                                             {CopulaFamily::Independence, 0.0}};
    for (const auto& [fam, tau] : cases) {
      CAPTURE(to_string(fam));
      const auto m = constant_model(fam, tau);
      const auto d = sample_conditional(m, 100000, 3);
      const auto cop = m.copula_at(0.5);
      for (double u : {0.2, 0.5, 0.8}) {
        for (double v : {0.3, 0.6}) {
          std::size_t hits = 0;
          for (std::size_t i = 0; i < d.known.size(); ++i) {
            hits += (d.known.e1[i] <= u && d.known.e2[i] <= v) ? 1 : 0;
          }
          CHECK(std::abs(hits / 1e5 - cop.cdf(u, v)) <= 0.01);
        }
      }
    }
  }

  TEST_CASE("conditional margins are uniform")
  {
    ConditionalModel m;
    const double crit = ks_critical_value(500, 0.01);
    int pass1 = 0;
    int pass2 = 0;
    for (std::uint64_t r = 0; r < 100; ++r) {
      const auto d = sample_conditional(m, 500, derive_seed(600, r));
      pass1 += ks_uniform(d.known.e1) <= crit ? 1 : 0;
      pass2 += ks_uniform(d.known.e2) <= crit ? 1 : 0;
    }
    CHECK(pass1 >= 95);
    CHECK(pass2 >= 95);
  }

  TEST_CASE("model JSON round trip")
  {
    ConditionalModel m;
    m.family = CopulaFamily::Frank;
    m.link = TauLink::parse("linear:0.1,0.3");
    m.covariate = CovariateLaw{CovariateLaw::Kind::Normal, 0.5, 0.2};
    const auto back = conditional_model_from_json(nlohmann::json::parse(m.to_json().dump()));
    CHECK(back.to_json() == m.to_json());
  }

  TEST_CASE("synthetic model: zero eigenvalues give the mean")
  {
    const auto g = make_grid(6);
    const auto model = SyntheticKLModel::standard(g, {0.0}, 0.5);
    const auto d = synthetic_kl_sample(model, 20, 1);
    for (const auto& t : d.ensemble.trajs) {
      CHECK(testing::bit_equal(t, model.mean()));
    }
    CHECK_THROWS_AS(SyntheticKLModel::standard(g, {-0.1}, 0.5), ValidationError);
    CHECK_THROWS_AS(synthetic_kl_sample(model, 0, 1), ValidationError);
  }

  TEST_CASE("synthetic model: score variances and covariance")
  {
    const auto g = make_grid(9);
    const std::vector<double> lambdas{0.4, 0.2, 0.05};
    const auto model = SyntheticKLModel::standard(g, lambdas, 0.5);
    const auto d = synthetic_kl_sample(model, 10000, 2);
    for (Eigen::Index k = 0; k < 3; ++k) {
      const Eigen::VectorXd col = d.scores.col(k);
      const double var = (col.array() - col.mean()).square().sum() / static_cast<double>(col.size() - 1);
      CHECK(std::abs(var / lambdas[static_cast<std::size_t>(k)] - 1.0) <= 0.05);
    }
    const auto es = model.eigensystem();
    for (std::size_t j = 0; j < 3; ++j) {
      for (std::size_t k = 0; k < 3; ++k) {
        CHECK(std::abs(inner_product(es.eigenfunctions[j], es.eigenfunctions[k]) - (j == k ? 1.0 : 0.0)) <= 1e-12);
      }
    }

    const auto d2 = synthetic_kl_sample(model, 5000, 3);
    const auto diff = (covariance_field(d2.ensemble, model.mean()) - model.covariance()).values();
    const double hs = std::sqrt(diff.squaredNorm()) * g.cell_weight();
    CHECK(hs <= 0.02);
  }
}
