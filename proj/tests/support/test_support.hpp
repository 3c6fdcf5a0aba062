#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "rlqls/env.hpp"
#include "rlqls/ising.hpp"
#include "rlqls/rng.hpp"
#include "rlqls/subproblem.hpp"

namespace rlqls::testing {

/// Straight-line double loop over the stored upper triangle, kept apart from
/// the production kernel.
inline double oracle_energy(const IsingProblem& p, std::span<const Spin> s) {
  const std::vector<double> upper = p.upper_triangle();
  double e = 0.0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.n(); ++i)
    for (std::size_t j = i + 1; j < p.n(); ++j) e += upper[k++] * s[i] * s[j];
  for (std::size_t i = 0; i < p.n(); ++i) e += p.fields()[i] * s[i];
  return e;
}

inline SpinConfig config_from_code(std::size_t n, std::uint64_t code) {
  std::vector<Spin> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = (code >> i) & 1 ? 1 : -1;
  return SpinConfig(std::move(s));
}

/// Minimum of energy() over all 2^n configurations.
inline double brute_force_min(const IsingProblem& p) {
  double best = 1e300;
  for (std::uint64_t c = 0; c < (std::uint64_t{1} << p.n()); ++c)
    best = std::min(best, energy(p, config_from_code(p.n(), c)));
  return best;
}

inline IsingProblem make_problem(std::size_t n, std::vector<double> upper, std::vector<double> fields,
                                 std::string id = "hand") {
  return IsingProblem(std::move(id), n, upper, std::move(fields));
}

inline std::shared_ptr<const IsingProblem> annotated(IsingProblem p) {
  annotate_gse(p, GseMethod::kExhaustive, 0);
  return std::make_shared<const IsingProblem>(std::move(p));
}

/// Fault injection: returns the negation of the current restriction, so the
/// candidate flips every selected spin. Used to drive uphill moves that the
/// exact solver never proposes.
inline SubSolver flip_all_solver(const SpinConfig& current) {
  return [current](const SubProblem& sub, Rng&) {
    SubSolution sol;
    for (std::size_t q : sub.indices) sol.assignment.push_back(static_cast<Spin>(-current[q]));
    sol.sub_energy = sub.sub_energy(sol.assignment);
    return sol;
  };
}

/// Fault injection: uniformly random assignment.
inline SubSolution random_sub_solver(const SubProblem& sub, Rng& rng) {
  SubSolution sol;
  for (std::size_t a = 0; a < sub.size(); ++a) sol.assignment.push_back(static_cast<Spin>(rng.spin()));
  sol.sub_energy = sub.sub_energy(sol.assignment);
  return sol;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("rlqls_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace rlqls::testing
