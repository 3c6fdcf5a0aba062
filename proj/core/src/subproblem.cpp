#include "rlqls/subproblem.hpp"

#include <limits>

#include "rlqls/error.hpp"

namespace rlqls {
namespace {

void check_indices(std::span<const std::size_t> indices, std::size_t n) {
  for (std::size_t a = 0; a < indices.size(); ++a) {
    RLQLS_REQUIRE(indices[a] < n, "sub-problem index out of range");
    for (std::size_t b = 0; b < a; ++b)
      RLQLS_REQUIRE(indices[a] != indices[b], "sub-problem indices must be distinct");
  }
}

}  // namespace

double SubProblem::sub_energy(std::span<const Spin> assignment) const {
  RLQLS_REQUIRE(assignment.size() == size(), "assignment length must equal m");
  const std::size_t m = size();
  double e = 0.0;
  for (std::size_t a = 0; a < m; ++a) {
    double pair = 0.0;
    for (std::size_t b = a + 1; b < m; ++b) pair += couplings[a * m + b] * assignment[b];
    e += assignment[a] * (pair + eff_fields[a]);
  }
  return e;
}

SubProblem extract(const IsingProblem& problem, const SpinConfig& config,
                   std::span<const std::size_t> indices) {
  const std::size_t n = problem.n();
  RLQLS_REQUIRE(config.size() == n, "config length does not match problem size");
  RLQLS_REQUIRE(!indices.empty(), "sub-problem needs at least one index");
  check_indices(indices, n);

  const std::size_t m = indices.size();
  std::vector<char> selected(n, 0);
  for (std::size_t q : indices) selected[q] = 1;

  SubProblem sub;
  sub.indices.assign(indices.begin(), indices.end());
  sub.couplings.assign(m * m, 0.0);
  sub.eff_fields.resize(m);
  for (std::size_t a = 0; a < m; ++a) {
    const auto row = problem.row(indices[a]);
    for (std::size_t b = 0; b < m; ++b) sub.couplings[a * m + b] = row[indices[b]];
    double h = problem.field(indices[a]);
    for (std::size_t k = 0; k < n; ++k)
      if (!selected[k]) h += row[k] * config[k];
    sub.eff_fields[a] = h;
  }

  double offset = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (selected[i]) continue;
    const auto row = problem.row(i);
    double pair = 0.0;
    for (std::size_t j = i + 1; j < n; ++j)
      if (!selected[j]) pair += row[j] * config[j];
    offset += config[i] * (pair + problem.field(i));
  }
  sub.offset = offset;
  return sub;
}

SubSolution solve_exact(const SubProblem& sub) {
  const std::size_t m = sub.size();
  if (m > kMaxSubproblemSize) {
    throw CapacityError("solve_exact enumerates at most m = 20 spins (got m = " +
                        std::to_string(m) + ")");
  }
  std::vector<Spin> x(m);
  SubSolution best{std::vector<Spin>(m, -1), std::numeric_limits<double>::infinity()};
  const std::uint64_t total = std::uint64_t{1} << m;
  for (std::uint64_t code = 0; code < total; ++code) {
    for (std::size_t a = 0; a < m; ++a) x[a] = (code >> a) & 1 ? 1 : -1;
    const double e = sub.sub_energy(x);
    if (e < best.sub_energy) {
      best.sub_energy = e;
      best.assignment = x;
    }
  }
  return best;
}

SpinConfig apply(const SpinConfig& config, std::span<const std::size_t> indices,
                 std::span<const Spin> assignment) {
  RLQLS_REQUIRE(indices.size() == assignment.size(), "indices and assignment lengths differ");
  check_indices(indices, config.size());
  std::vector<Spin> spins(config.spins().begin(), config.spins().end());
  for (std::size_t a = 0; a < indices.size(); ++a) spins[indices[a]] = assignment[a];
  return SpinConfig(std::move(spins));
}

}  // namespace rlqls
