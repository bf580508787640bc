#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ccfpca {

//! Counter-based random stream. The state is derived by hashing
//! (seed, stream, index), so draws for observation i never depend on how
//! many draws other observations consumed or on which thread made them.
class Rng
{
public:
  Rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

  std::uint64_t next_u64();
  //! Uniform on the open interval (0, 1).
  double uniform();
  double normal();

private:
  std::uint64_t state_;
};

//! SplitMix64 finalizer; also used to derive replication seeds.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

double normal_cdf(double z);
double normal_quantile(double p);

//! One-sample Kolmogorov-Smirnov distance from Uniform(0,1).
double ks_uniform(std::span<const double> sample);
//! Asymptotic two-sided KS critical value c(alpha)/sqrt(n) for alpha in
//! {0.10, 0.05, 0.01}.
double ks_critical_value(std::size_t n, double alpha);

//! Kendall's tau-a of paired samples (O(n^2), fine for n in the thousands).
double kendall_tau(std::span<const double> x, std::span<const double> y);

double mean(std::span<const double> x);
//! Sample standard deviation with n - 1 denominator.
double stddev(std::span<const double> x);
double median(std::vector<double> x);
double quantile(std::vector<double> x, double p);

//! Stable 0-based ranks: ties are broken by original position.
std::vector<std::size_t> stable_ranks(std::span<const double> x);
//! Number of adjacent equal values after sorting.
std::size_t count_ties(std::span<const double> x);

} // namespace ccfpca
