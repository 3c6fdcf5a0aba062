#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rlqls/rng.hpp"

namespace rlqls {

using Spin = std::int8_t;

/// A length-n vector of +/-1 spins (the trial solution).
class SpinConfig {
 public:
  SpinConfig() = default;
  explicit SpinConfig(std::vector<Spin> spins);
  static SpinConfig all_up(std::size_t n);
  static SpinConfig random(std::size_t n, Rng& rng);

  std::size_t size() const { return spins_.size(); }
  Spin operator[](std::size_t i) const { return spins_[i]; }
  std::span<const Spin> spins() const { return spins_; }

  /// Copy with the given positions negated.
  SpinConfig flipped(std::span<const std::size_t> indices) const;

  friend bool operator==(const SpinConfig&, const SpinConfig&) = default;

 private:
  std::vector<Spin> spins_;
};

enum class GseProvenance { kExhaustive, kTabu };

const char* to_string(GseProvenance p);
GseProvenance parse_provenance(const std::string& s);

struct GseRef {
  double energy = 0.0;
  GseProvenance provenance = GseProvenance::kExhaustive;
};

/// Fully connected Ising instance
///   E(s) = sum_{i<j} J_ij s_i s_j + sum_i h_i s_i.
/// Couplings are kept as a dense symmetric n x n matrix with a zero diagonal
/// so that row access (local fields) is contiguous.
class IsingProblem {
 public:
  IsingProblem() = default;

  /// `upper` holds J_ij for i<j in (i, j)-sorted order, n(n-1)/2 entries.
  IsingProblem(std::string id, std::size_t n, std::span<const double> upper,
               std::vector<double> fields);

  std::size_t n() const { return n_; }
  const std::string& id() const { return id_; }
  double coupling(std::size_t i, std::size_t j) const { return dense_[i * n_ + j]; }
  std::span<const double> row(std::size_t i) const {
    return {dense_.data() + i * n_, n_};
  }
  double field(std::size_t i) const { return fields_[i]; }
  std::span<const double> fields() const { return fields_; }

  /// J_ij for i<j in (i, j)-sorted order.
  std::vector<double> upper_triangle() const;

  const std::optional<GseRef>& gse_ref() const { return gse_ref_; }
  void set_gse_ref(std::optional<GseRef> ref) { gse_ref_ = ref; }

  static std::size_t pair_count(std::size_t n) { return n * (n - 1) / 2; }

 private:
  std::string id_;
  std::size_t n_ = 0;
  std::vector<double> dense_;
  std::vector<double> fields_;
  std::optional<GseRef> gse_ref_;
};

double energy(const IsingProblem& problem, const SpinConfig& config);

/// h_i + sum_j J_ij s_j.
double local_field(const IsingProblem& problem, const SpinConfig& config, std::size_t i);

/// energy(flipped) - energy(config) in O(|flips| * n).
double delta_energy(const IsingProblem& problem, const SpinConfig& config,
                    std::span<const std::size_t> flips);

/// Couplings and fields i.i.d. uniform on (-1, 1). Draw order: pairs in
/// (i, j)-sorted order, then fields.
IsingProblem generate_instance(std::size_t n, Rng& rng, std::string id = {});

struct InstanceSet {
  std::vector<IsingProblem> problems;
  std::uint64_t seed = 0;
  std::string kind = "train";
};

/// Regenerating from the same (n, count, seed, kind) is bit-identical.
InstanceSet generate_set(std::size_t n, std::size_t count, std::uint64_t seed,
                         const std::string& kind);

struct GroundState {
  double energy = 0.0;
  SpinConfig config;
};

inline constexpr std::size_t kMaxExhaustiveN = 24;

/// Exact minimum by Gray-code enumeration of all 2^n configurations.
/// Throws CapacityError for n > 24.
GroundState gse_exhaustive(const IsingProblem& problem);

struct TabuParams {
  std::size_t tenure = 20;
  std::size_t iterations_per_restart = 0;  // 0 means 50 * n
  std::size_t restarts = 10;
};

/// Single-flip tabu search with aspiration and random restarts.
GroundState gse_tabu(const IsingProblem& problem, const TabuParams& params, Rng& rng);

enum class GseMethod { kAuto, kExhaustive, kTabu };

/// Computes and stores gse_ref. kAuto picks exhaustive for n <= 24.
GseRef annotate_gse(IsingProblem& problem, GseMethod method, std::uint64_t seed,
                    const TabuParams& params = {});

}  // namespace rlqls
