#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rlqls/env.hpp"
#include "rlqls/ising.hpp"

namespace rlqls {

struct NamedPolicy {
  std::string name;
  Policy policy;
};

struct EvalSettings {
  std::size_t m = 5;
  std::size_t steps = 200;
  std::size_t repeats = 1;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

/// One-sided paired t-test of candidate - baseline > 0 on per-problem means.
struct PairedStats {
  std::string candidate;
  std::string baseline;
  std::size_t pairs = 0;
  double mean_difference = 0.0;
  double standard_error = 0.0;
  double t_statistic = 0.0;
  double p_value = 1.0;
};

PairedStats paired_one_sided_test(const std::string& candidate, const std::string& baseline,
                                  const std::vector<double>& candidate_values,
                                  const std::vector<double>& baseline_values);

struct EvalReport {
  std::vector<std::string> policies;
  std::vector<std::string> problem_ids;
  EvalSettings settings;
  // [policy][problem][repeat][step], approximation ratios
  std::vector<std::vector<std::vector<std::vector<double>>>> best_ratio;
  std::vector<std::vector<std::vector<std::vector<double>>>> current_ratio;
  // [policy][step], mean over problems and repeats
  std::vector<std::vector<double>> best_curve;
  std::vector<std::vector<double>> current_curve;
  // [policy][problem], mean over repeats of the final best-so-far ratio
  std::vector<std::vector<double>> finals;
  std::vector<double> final_means;  // [policy]
  // Each policy after the first against the first (the baseline).
  std::vector<PairedStats> comparisons;
  bool gse_refined = false;

  std::size_t policy_index(const std::string& name) const;
};

/// Every policy sees the same problems, the same initial configuration for
/// each (problem, repeat) and the same step budget. Tasks run on a worker
/// pool; results do not depend on the thread count.
EvalReport evaluate(const InstanceSet& instances, const std::vector<NamedPolicy>& policies,
                    const EvalSettings& settings);

/// Writes curves.csv (best-so-far mean per step, one column per policy),
/// curves_current.csv, series.csv (every per-step value), finals.csv and
/// summary.txt into `dir`; returns the summary text.
std::string summarize(const EvalReport& report, const std::filesystem::path& dir);

inline constexpr double kSignificanceLevel = 0.05;

}  // namespace rlqls
