// Pilot run for the consistency bound: 10x the shipped replications on a
// seed disjoint from the default one. The bound is the 95th percentile of
// per-replication sup errors at the largest n, rounded up to 0.005.
#include "ccfpca/mc_harness.hpp"
#include "ccfpca/stats.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

int main(int argc, char** argv)
{
  CLI::App app{"Pilot calibration of the consistency threshold", "calibrate_thresholds"};
  std::string out = "calibration/consistency.json";
  std::size_t factor = 10;
  std::uint64_t seed = 9001;
  app.add_option("--out", out, "Where to write the pilot report");
  app.add_option("--factor", factor, "Replication multiplier");
  app.add_option("--seed", seed, "Pilot seed");
  CLI11_PARSE(app, argc, argv);

  auto cfg = ccfpca::default_experiment("consistency");
  cfg.replications *= factor;
  cfg.seed = seed;
  const auto rep = ccfpca::run_experiment(cfg);

  const auto last = cfg.n_ladder.back();
  std::vector<double> final_errors;
  for (const auto& row : rep.raw) {
    if (row.at("n").get<std::size_t>() == last && !row.at("sup_error@x=0.5").is_null()) {
      final_errors.push_back(row.at("sup_error@x=0.5").get<double>());
    }
  }
  const double q95 = ccfpca::quantile(final_errors, 0.95);
  const double bound = std::ceil(q95 / 0.005) * 0.005;

  auto j = rep.to_json(false);
  j["calibration"] = {{"rule", "95th percentile of per-replication sup error at the largest n, rounded up to 0.005"},
                      {"n", last},
                      {"replications", final_errors.size()},
                      {"median", ccfpca::median(final_errors)},
                      {"q95", q95},
                      {"bound", bound}};
  const auto parent = std::filesystem::path(out).parent_path();
  if (!parent.empty()) {
    std::filesystem::create_directories(parent);
  }
  std::ofstream(out) << j.dump(2) << "\n";
  std::cout << rep.to_text() << "calibrated final_sup_error bound: " << bound << " (q95 " << q95 << ")\n";
  return 0;
}
