#include "ccfpca/stats.hpp"

#include "ccfpca/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

namespace ccfpca {

std::uint64_t mix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b)
{
  return mix64(mix64(mix64(seed) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index)
  : state_(derive_seed(seed, stream, index))
{}

std::uint64_t Rng::next_u64()
{
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform()
{
  // 53 random bits, shifted half a step so 0 and 1 are never returned.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal()
{
  return normal_quantile(uniform());
}

double normal_cdf(double z)
{
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

double normal_quantile(double p)
{
  static const boost::math::normal_distribution<double> std_normal(0.0, 1.0);
  return boost::math::quantile(std_normal, p);
}

double ks_uniform(std::span<const double> sample)
{
  if (sample.empty()) {
    return 0.0;
  }
  std::vector<double> sorted(sample.begin(), sample.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto di = static_cast<double>(i);
    d = std::max(d, std::max((di + 1) / n - sorted[i], sorted[i] - di / n));
  }
  return d;
}

double ks_critical_value(std::size_t n, double alpha)
{
  double c = 0.0;
  if (alpha == 0.10) {
    c = 1.22;
  } else if (alpha == 0.05) {
    c = 1.36;
  } else if (alpha == 0.01) {
    c = 1.63;
  } else {
    throw ValidationError("ks_critical_value: alpha must be 0.10, 0.05 or 0.01");
  }
  return c / std::sqrt(static_cast<double>(n));
}

double kendall_tau(std::span<const double> x, std::span<const double> y)
{
  if (x.size() != y.size()) {
    throw ValidationError("kendall_tau: length mismatch");
  }
  const auto n = x.size();
  if (n < 2) {
    return 0.0;
  }
  long long s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = (x[i] - x[j]) * (y[i] - y[j]);
      s += (p > 0) - (p < 0);
    }
  }
  return static_cast<double>(s) / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

double mean(std::span<const double> x)
{
  if (x.empty()) {
    return 0.0;
  }
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double stddev(std::span<const double> x)
{
  if (x.size() < 2) {
    return 0.0;
  }
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) {
    ss += (v - m) * (v - m);
  }
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double quantile(std::vector<double> x, double p)
{
  if (x.empty()) {
    return std::nan("");
  }
  std::sort(x.begin(), x.end());
  const double pos = p * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, x.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return (1 - w) * x[lo] + w * x[hi];
}

double median(std::vector<double> x)
{
  return quantile(std::move(x), 0.5);
}

std::vector<std::size_t> stable_ranks(std::span<const double> x)
{
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<std::size_t> rank(x.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    rank[order[r]] = r;
  }
  return rank;
}

std::size_t count_ties(std::span<const double> x)
{
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  std::size_t ties = 0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    ties += (s[i] == s[i - 1]);
  }
  return ties;
}

} // namespace ccfpca
