#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rlqls/ising.hpp"

namespace rlqls {

/// Restriction of a problem to m selected spins with every other spin frozen
/// at its current value. Frozen couplings fold into effective fields and the
/// frozen-only terms into `offset`, so for any assignment x of the selected
/// spins: energy(merge(config, indices, x)) == sub_energy(x) + offset.
struct SubProblem {
  std::vector<std::size_t> indices;
  std::vector<double> couplings;   // dense symmetric m x m, zero diagonal
  std::vector<double> eff_fields;  // h'_a = h_{q_a} + sum_{k not selected} J_{q_a k} s_k
  double offset = 0.0;

  std::size_t size() const { return indices.size(); }
  double coupling(std::size_t a, std::size_t b) const { return couplings[a * size() + b]; }
  double sub_energy(std::span<const Spin> assignment) const;
};

struct SubSolution {
  std::vector<Spin> assignment;
  double sub_energy = 0.0;
};

inline constexpr std::size_t kMaxSubproblemSize = 20;

SubProblem extract(const IsingProblem& problem, const SpinConfig& config,
                   std::span<const std::size_t> indices);

/// Exact minimum over all 2^m assignments. Ties go to the smallest binary
/// encoding (spin -1 is bit 0, position 0 is the least significant bit).
SubSolution solve_exact(const SubProblem& sub);

/// Copy of `config` with `assignment` written at `indices`.
SpinConfig apply(const SpinConfig& config, std::span<const std::size_t> indices,
                 std::span<const Spin> assignment);

}  // namespace rlqls
