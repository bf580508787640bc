#include "doctest.h"
#include "support.hpp"

#include "ccfpca/conditional.hpp"
#include "ccfpca/copula_sim.hpp"
#include "ccfpca/error.hpp"

#include <sstream>

using namespace ccfpca;

namespace {

Sample small_sample(std::vector<double> y1, std::vector<double> y2, std::vector<double> x)
{
  return Sample{std::move(y1), std::move(y2), std::move(x)};
}

const KernelSpec wide{KernelFamily::Uniform, 10.0};

} // namespace

TEST_SUITE("conditional")
{
  TEST_CASE("weights: all covariates at x are uniform")
  {
    const std::vector<double> xs(5, 0.3);
    for (auto fam : {KernelFamily::Epanechnikov, KernelFamily::Gaussian, KernelFamily::Uniform}) {
      const auto w = nw_weights(0.3, xs, KernelSpec{fam, 0.1});
      CHECK_FALSE(w.degenerate);
      for (double wi : w.w) {
        CHECK(wi == doctest::Approx(0.2).epsilon(1e-15));
      }
    }
  }

  TEST_CASE("weights: single point in the window, and degenerate window")
  {
    const std::vector<double> xs{0.0, 0.5, 1.0};
    const auto w = nw_weights(0.52, xs, KernelSpec{KernelFamily::Epanechnikov, 0.1});
    CHECK(w.w == std::vector<double>{0.0, 1.0, 0.0});
    const auto d = nw_weights(5.0, xs, KernelSpec{KernelFamily::Epanechnikov, 0.1});
    CHECK(d.degenerate);
  }

  TEST_CASE("weights sum to one")
  {
    Rng rng(3, 0);
    std::vector<double> xs;
    for (int i = 0; i < 200; ++i) {
      xs.push_back(rng.uniform());
    }
    for (double x : {0.0, 0.1, 0.5, 0.97}) {
      for (auto fam : {KernelFamily::Epanechnikov, KernelFamily::Gaussian, KernelFamily::Uniform}) {
        const auto w = nw_weights(x, xs, KernelSpec{fam, 0.15});
        double s = 0.0;
        for (double wi : w.w) {
          CHECK(wi >= 0.0);
          s += wi;
        }
        CHECK(std::abs(s - 1.0) <= 1e-12);
      }
    }
  }

  TEST_CASE("bandwidth must be positive")
  {
    CHECK_THROWS_AS(nw_weights(0.0, std::vector<double>{0.0}, KernelSpec{KernelFamily::Uniform, 0.0}),
                    ValidationError);
  }

  TEST_CASE("conditional CDF examples")
  {
    const auto s = small_sample({1, 2, 3, 4}, {0, 0, 0, 0}, {0, 0, 0, 0});
    const auto w = nw_weights(0.0, s.x, wide);
    CHECK(cond_cdf(4.0, 1, w, s) == 1.0);
    CHECK(cond_cdf(10.0, 1, w, s) == 1.0);
    CHECK(cond_cdf(0.5, 1, w, s) == 0.0);
    CHECK(cond_cdf(2.5, 1, w, s) == 0.5);
  }

  TEST_CASE("conditional quantile examples")
  {
    const auto s = small_sample({1.0, 3.0}, {0, 0}, {0, 0});
    const auto w = nw_weights(0.0, s.x, wide);
    CHECK(cond_quantile(0.5, 1, w, s) == 1.0);
    CHECK(cond_quantile(0.6, 1, w, s) == 3.0);
    CHECK(cond_quantile(1.0, 1, w, s) == 3.0);
    CHECK_THROWS_AS(cond_quantile(0.0, 1, w, s), ValidationError);
    // u = 1 returns the largest value carrying positive weight.
    const auto s3 = small_sample({1.0, 3.0, 9.0}, {0, 0, 0}, {0, 0, 5});
    const auto w3 = nw_weights(0.0, s3.x, KernelSpec{KernelFamily::Uniform, 1.0});
    CHECK(cond_quantile(1.0, 1, w3, s3) == 3.0);
  }

  TEST_CASE("Galois property of the generalised inverse")
  {
    const auto sim = sample_conditional(ConditionalModel{}, 60, 5);
    const auto w = nw_weights(0.4, sim.sample.x, KernelSpec{KernelFamily::Epanechnikov, 0.3});
    for (double u : {0.01, 0.1, 0.33, 0.5, 0.77, 1.0}) {
      const double q = cond_quantile(u, 2, w, sim.sample);
      CHECK(cond_cdf(q, 2, w, sim.sample) >= u - 1e-12);
      for (double y : sim.sample.y2) {
        CHECK((cond_cdf(y, 2, w, sim.sample) >= u - 1e-12) == (y >= q));
      }
    }
  }

  TEST_CASE("pseudo-observations: hand example and self-inclusion")
  {
    const auto s = small_sample({1.0, 3.0}, {5.0, 4.0}, {0.2, 0.2});
    const auto p = pseudo_observations(s, wide, wide);
    CHECK(p.e1 == std::vector<double>{0.5, 1.0});
    CHECK(p.e2 == std::vector<double>{1.0, 0.5});

    const auto sim = sample_conditional(ConditionalModel{}, 300, 9);
    const KernelSpec k{KernelFamily::Epanechnikov, 0.2};
    const auto q = pseudo_observations(sim.sample, k, k);
    for (std::size_t i = 0; i < q.size(); ++i) {
      const auto w = nw_weights(sim.sample.x[i], sim.sample.x, k);
      CHECK(q.e1[i] >= w.w[i]);
      CHECK(q.e2[i] >= w.w[i]);
      CHECK(q.e1[i] <= 1.0);
    }
  }

  TEST_CASE("pseudo-observations: degenerate weights name the index")
  {
    const auto s = small_sample({1, 2, 3}, {1, 2, 3}, {0.0, 0.01, 5.0});
    const KernelSpec k{KernelFamily::Epanechnikov, 0.1};
    // With leave-one-out, observation 2 has no neighbour at all.
    CHECK_THROWS_WITH_AS(pseudo_observations(s, k, k, true),
                         doctest::Contains("observation 2"), NumericalError);
  }

  TEST_CASE("pseudo-observations are uniform on a simulated model")
  {
    const auto sim = sample_conditional(ConditionalModel{}, 2000, 42);
    const KernelSpec k{KernelFamily::Epanechnikov, rule_of_thumb_bandwidth(sim.sample.x)};
    const auto p = pseudo_observations(sim.sample, k, k);
    CHECK(ks_uniform(p.e1) < 0.05);
    CHECK(ks_uniform(p.e2) < 0.05);
  }

  TEST_CASE("parallel pseudo-observations match the serial reference bit for bit")
  {
    const auto sim = sample_conditional(ConditionalModel{}, 700, 4);
    const KernelSpec k{KernelFamily::Gaussian, 0.08};
    const auto ref = serial::pseudo_observations(sim.sample, k, k);
    for (int t : {1, 3}) {
      testing::ThreadCount tc(t);
      const auto p = pseudo_observations(sim.sample, k, k);
      CHECK(p.e1 == ref.e1);
      CHECK(p.e2 == ref.e2);
    }
  }

  TEST_CASE("empirical copula examples")
  {
    PseudoSample p{{0.1, 0.9}, {0.2, 0.8}};
    CHECK(empirical_copula(p, 1.0, 1.0) == 1.0);
    CHECK(empirical_copula(p, 0.7, 0.0) == 0.0);
    CHECK(empirical_copula(p, 0.0, 0.3) == 0.0);
    CHECK(empirical_copula(p, 0.5, 0.5) == 0.5);
  }

  TEST_CASE("known-margins partial copula examples")
  {
    PseudoSample p{{0.3}, {0.7}, Provenance::KnownMargins};
    CHECK(partial_copula_known_margins(p, 1.0, 1.0) == 1.0);
    CHECK(partial_copula_known_margins(p, 0.5, 0.5) == 0.0);
    CHECK(partial_copula_known_margins(p, 0.5, 0.8) == 1.0);
  }

  TEST_CASE("empirical copula is 2-increasing with uniform margins")
  {
    const auto p = testing::random_pseudo(137, 11);
    const auto g = make_grid(21);
    const auto c = EmpiricalCopula(p).on_grid(g);
    for (std::size_t a = 1; a < g.size(); ++a) {
      for (std::size_t b = 1; b < g.size(); ++b) {
        CHECK(c(a, b) - c(a - 1, b) - c(a, b - 1) + c(a - 1, b - 1) >= -1e-12);
      }
    }
    const EmpiricalCopula ec(p);
    for (double u : {0.0, 0.2, 0.5, 1.0}) {
      CHECK(ec(u, 1.0) == doctest::Approx(std::ceil(137 * u - 1e-9) / 137.0));
      CHECK(ec(u, 0.0) == 0.0);
    }
  }

  TEST_CASE("lattice forms agree with pointwise evaluation")
  {
    const auto p = testing::random_pseudo(83, 12);
    std::vector<double> levels;
    for (int i = 0; i <= 40; ++i) {
      levels.push_back(i / 40.0);
    }
    const EmpiricalCopula ec(p);
    const auto lat = ec.on_lattice(levels);
    const auto known = partial_copula_known_margins_lattice(p, levels);
    const auto ranks = rank_ecdf_lattice(p, levels);
    for (std::size_t a = 0; a < levels.size(); ++a) {
      for (std::size_t b = 0; b < levels.size(); ++b) {
        const auto k = a * levels.size() + b;
        CHECK(lat[k] == doctest::Approx(ec(levels[a], levels[b])).epsilon(1e-14));
        CHECK(known[k] == doctest::Approx(partial_copula_known_margins(p, levels[a], levels[b])).epsilon(1e-14));
        CHECK(ranks[k] == doctest::Approx(rank_ecdf(p, levels[a], levels[b])).epsilon(1e-14));
      }
    }
  }

  TEST_CASE("rank ECDF stays within 2/n of the empirical copula")
  {
    for (std::size_t n : {1, 7, 50, 333}) {
      const auto p = testing::random_pseudo(n, n);
      const EmpiricalCopula ec(p);
      Rng rng(n, 7);
      double worst = 0.0;
      for (int t = 0; t < 2000; ++t) {
        const double u = rng.uniform();
        const double v = rng.uniform();
        worst = std::max(worst, std::abs(ec(u, v) - rank_ecdf(p, u, v)));
      }
      CHECK(worst <= 2.0 / static_cast<double>(n) + 1e-12);
    }
  }

  TEST_CASE("trajectory builder matches brute-force weighted inverse")
  {
    const auto p = testing::random_pseudo(120, 21);
    Rng rng(5, 5);
    std::vector<double> xs;
    for (int i = 0; i < 120; ++i) {
      xs.push_back(rng.uniform());
    }
    const auto g = make_grid(11);
    const TrajectoryBuilder b(p, xs, KernelSpec{KernelFamily::Epanechnikov, 0.2}, g);
    for (double x : {0.1, 0.5, 0.93}) {
      const auto w = nw_weights(x, xs, b.kernel());
      const auto fast = b(x);
      const auto brute = testing::brute_trajectory(p, w.w, g);
      CHECK(sup_distance(fast, brute) <= 1e-12);
    }
  }

  TEST_CASE("trajectories are monotone surfaces in [0, 1]")
  {
    const auto sim = sample_conditional(ConditionalModel{}, 400, 8);
    const KernelSpec k{KernelFamily::Epanechnikov, 0.15};
    const auto g = make_grid(21);
    for (double x : {0.05, 0.5, 0.9}) {
      const auto t = gijbels_trajectory(x, sim.sample, k, k, k, g);
      for (std::size_t a = 0; a < g.size(); ++a) {
        for (std::size_t b = 0; b < g.size(); ++b) {
          CHECK(t(a, b) >= 0.0);
          CHECK(t(a, b) <= 1.0);
          if (a > 0) {
            CHECK(t(a, b) >= t(a - 1, b));
          }
          if (b > 0) {
            CHECK(t(a, b) >= t(a, b - 1));
          }
        }
      }
    }
  }

  TEST_CASE("single effective weight gives an indicator surface")
  {
    const auto p = testing::random_pseudo(30, 3);
    const TrajectoryBuilder b(p, std::vector<double>(30, 0.0), KernelSpec{}, make_grid(9));
    std::vector<double> w(30, 0.0);
    w[17] = 1.0;
    const auto t = b.with_weights(w);
    for (double v : t.values()) {
      CHECK((v == 0.0 || v == 1.0));
    }
  }

  TEST_CASE("trajectory at a constant-tau Clayton model is close to the truth")
  {
    ConditionalModel m;
    m.link = TauLink::parse("const:0.5");
    const auto sim = sample_conditional(m, 2000, 77);
    const KernelSpec k{KernelFamily::Epanechnikov, rule_of_thumb_bandwidth(sim.sample.x)};
    const auto g = make_grid(21);
    const auto est = gijbels_trajectory(0.5, sim.sample, k, k, k, g);
    CHECK(sup_distance(est, true_conditional_copula(m, 0.5, g)) <= 0.08);
  }

  TEST_CASE("trajectory ensemble: parallel equals serial, degenerate x reported")
  {
    const auto sim = sample_conditional(ConditionalModel{}, 500, 2);
    const KernelSpec k{KernelFamily::Epanechnikov, 0.12};
    const auto p = pseudo_observations(sim.sample, k, k);
    const TrajectoryBuilder b(p, sim.sample.x, k, make_grid(15));
    const auto ref = serial::trajectory_ensemble(b, sim.sample.x);
    testing::ThreadCount tc(3);
    const auto par = trajectory_ensemble(b, sim.sample.x);
    REQUIRE(par.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      CHECK(testing::bit_equal(par[i], ref[i]));
    }
    CHECK_THROWS_WITH_AS(b(7.0), doctest::Contains("bandwidth h"), NumericalError);
  }

  TEST_CASE("sample CSV: round trip and line-numbered errors")
  {
    const auto sim = sample_conditional(ConditionalModel{}, 25, 1);
    std::stringstream ss;
    write_sample_csv(ss, sim.sample);
    const auto back = read_sample_csv(ss);
    CHECK(back.y1 == sim.sample.y1);
    CHECK(back.y2 == sim.sample.y2);
    CHECK(back.x == sim.sample.x);

    std::istringstream bad("y1,y2,x\n1,2,3\n4,nan,6\n");
    CHECK_THROWS_WITH_AS(read_sample_csv(bad), doctest::Contains("line 3"), ValidationError);
    std::istringstream header("a,b,c\n1,2,3\n");
    CHECK_THROWS_AS(read_sample_csv(header), ValidationError);
    std::istringstream short_row("y1,y2,x\n1,2\n");
    CHECK_THROWS_WITH_AS(read_sample_csv(short_row), doctest::Contains("line 2"), ValidationError);
  }

  TEST_CASE("ties are counted and broken by sample order")
  {
    const auto s = small_sample({1, 1, 2}, {3, 2, 1}, {0, 0, 0});
    const auto p = pseudo_observations(s, wide, wide);
    CHECK(p.ties >= 1);
    CHECK(EmpiricalCopula(p)(1.0 / 3.0, 1.0) == doctest::Approx(1.0 / 3.0));
  }

  TEST_CASE("rule-of-thumb bandwidth")
  {
    const std::vector<double> xs{0, 1, 2, 3, 4};
    CHECK(rule_of_thumb_bandwidth(xs) == doctest::Approx(stddev(xs) * std::pow(5.0, -0.2)));
    CHECK(rule_of_thumb_bandwidth(xs, 2.0, -0.4) == doctest::Approx(2.0 * stddev(xs) * std::pow(5.0, -0.4)));
    CHECK_THROWS_AS(rule_of_thumb_bandwidth(std::vector<double>{1, 1, 1}), NumericalError);
  }
}
