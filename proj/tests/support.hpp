#pragma once

#include "ccfpca/conditional.hpp"
#include "ccfpca/grid.hpp"
#include "ccfpca/stats.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace testing {

// Restores the OpenMP thread count on scope exit.
struct ThreadCount
{
  int saved;
  explicit ThreadCount(int n)
    : saved(omp_get_max_threads())
  {
    omp_set_num_threads(n);
  }
  ~ThreadCount() { omp_set_num_threads(saved); }
};

inline bool bit_equal(const ccfpca::GridFunction& a, const ccfpca::GridFunction& b)
{
  return a.grid() == b.grid() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

inline ccfpca::GridFunction random_function(const ccfpca::Grid2D& g, std::uint64_t seed)
{
  ccfpca::Rng rng(seed, 99);
  std::vector<double> v(g.num_nodes());
  for (auto& x : v) {
    x = rng.normal();
  }
  return ccfpca::GridFunction(g, std::move(v));
}

inline ccfpca::GridFunction random_unit(const ccfpca::Grid2D& g, std::uint64_t seed)
{
  const auto f = random_function(g, seed);
  return f * (1.0 / ccfpca::l2_norm(f));
}

// Tie-free uniform pseudo-sample with independent margins.
inline ccfpca::PseudoSample random_pseudo(std::size_t n, std::uint64_t seed)
{
  ccfpca::Rng rng(seed, 98);
  ccfpca::PseudoSample p;
  for (std::size_t i = 0; i < n; ++i) {
    p.e1.push_back(rng.uniform());
    p.e2.push_back(rng.uniform());
  }
  return p;
}

// Weighted generalised inverse by brute force: the smallest observed t
// with sum_{e_i <= t} w_i >= u, weights accumulated in increasing e.
inline double brute_quantile(const std::vector<double>& e, const std::vector<double>& w, double u)
{
  std::vector<std::size_t> idx(e.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    idx[i] = i;
  }
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return e[a] < e[b]; });
  double cum = 0.0;
  for (auto i : idx) {
    cum += w[i];
    if (cum >= u && w[i] > 0.0) {
      return e[i];
    }
  }
  double last = -1.0;
  for (auto i : idx) {
    if (w[i] > 0.0) {
      last = e[i];
    }
  }
  return last;
}

inline ccfpca::GridFunction brute_trajectory(const ccfpca::PseudoSample& p, const std::vector<double>& w,
                                             const ccfpca::Grid2D& g)
{
  std::vector<double> vals(g.num_nodes());
  for (std::size_t a = 0; a < g.size(); ++a) {
    const double q1 = brute_quantile(p.e1, w, g.node(a));
    for (std::size_t b = 0; b < g.size(); ++b) {
      const double q2 = brute_quantile(p.e2, w, g.node(b));
      double s = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (p.e1[i] <= q1 && p.e2[i] <= q2) {
          s += w[i];
        }
      }
      vals[g.index(a, b)] = s;
    }
  }
  return ccfpca::GridFunction(g, std::move(vals));
}

} // namespace testing
