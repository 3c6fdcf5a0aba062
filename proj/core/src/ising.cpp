#include "rlqls/ising.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>

#include "rlqls/error.hpp"

namespace rlqls {

SpinConfig::SpinConfig(std::vector<Spin> spins) : spins_(std::move(spins)) {
  for (Spin s : spins_) RLQLS_REQUIRE(s == 1 || s == -1, "spin values must be +1 or -1");
}

SpinConfig SpinConfig::all_up(std::size_t n) { return SpinConfig(std::vector<Spin>(n, 1)); }

SpinConfig SpinConfig::random(std::size_t n, Rng& rng) {
  std::vector<Spin> s(n);
  for (auto& v : s) v = static_cast<Spin>(rng.spin());
  return SpinConfig(std::move(s));
}

SpinConfig SpinConfig::flipped(std::span<const std::size_t> indices) const {
  SpinConfig out = *this;
  for (std::size_t i : indices) {
    RLQLS_REQUIRE(i < out.spins_.size(), "flip index out of range");
    out.spins_[i] = static_cast<Spin>(-out.spins_[i]);
  }
  return out;
}

const char* to_string(GseProvenance p) {
  return p == GseProvenance::kExhaustive ? "exhaustive" : "tabu";
}

GseProvenance parse_provenance(const std::string& s) {
  if (s == "exhaustive") return GseProvenance::kExhaustive;
  if (s == "tabu") return GseProvenance::kTabu;
  throw ContractError("unknown gse provenance '" + s + "'");
}

IsingProblem::IsingProblem(std::string id, std::size_t n, std::span<const double> upper,
                           std::vector<double> fields)
    : id_(std::move(id)), n_(n), dense_(n * n, 0.0), fields_(std::move(fields)) {
  RLQLS_REQUIRE(n >= 1, "problem size must be positive");
  RLQLS_REQUIRE(upper.size() == pair_count(n), "coupling count must be n(n-1)/2");
  RLQLS_REQUIRE(fields_.size() == n, "field count must equal n");
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j, ++k) {
      RLQLS_REQUIRE(std::isfinite(upper[k]), "couplings must be finite");
      dense_[i * n + j] = upper[k];
      dense_[j * n + i] = upper[k];
    }
  }
  for (double h : fields_) RLQLS_REQUIRE(std::isfinite(h), "fields must be finite");
}

std::vector<double> IsingProblem::upper_triangle() const {
  std::vector<double> out;
  out.reserve(pair_count(n_));
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = i + 1; j < n_; ++j) out.push_back(dense_[i * n_ + j]);
  return out;
}

namespace {

void check_dims(const IsingProblem& problem, const SpinConfig& config) {
  if (config.size() != problem.n()) {
    throw ContractError("config length " + std::to_string(config.size()) +
                        " does not match problem size " + std::to_string(problem.n()));
  }
}

}  // namespace

double energy(const IsingProblem& problem, const SpinConfig& config) {
  check_dims(problem, config);
  const std::size_t n = problem.n();
  double e = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = problem.row(i);
    double pair = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) pair += row[j] * config[j];
    e += config[i] * (pair + problem.field(i));
  }
  return e;
}

double local_field(const IsingProblem& problem, const SpinConfig& config, std::size_t i) {
  const auto row = problem.row(i);
  double f = problem.field(i);
  for (std::size_t j = 0; j < problem.n(); ++j) f += row[j] * config[j];
  return f;
}

double delta_energy(const IsingProblem& problem, const SpinConfig& config,
                    std::span<const std::size_t> flips) {
  check_dims(problem, config);
  const std::size_t n = problem.n();
  for (std::size_t a = 0; a < flips.size(); ++a) {
    RLQLS_REQUIRE(flips[a] < n, "flip index out of range");
    for (std::size_t b = 0; b < a; ++b)
      RLQLS_REQUIRE(flips[a] != flips[b], "flip indices must be distinct");
  }
  // Pairs with both ends flipped keep their sign; only the boundary to the
  // unflipped remainder and the linear terms change.
  double delta = 0.0;
  for (std::size_t a = 0; a < flips.size(); ++a) {
    const std::size_t i = flips[a];
    double f = local_field(problem, config, i);
    for (std::size_t b = 0; b < flips.size(); ++b) f -= problem.coupling(i, flips[b]) * config[flips[b]];
    delta += -2.0 * config[i] * f;
  }
  return delta;
}

IsingProblem generate_instance(std::size_t n, Rng& rng, std::string id) {
  RLQLS_REQUIRE(n >= 2, "generate_instance requires n >= 2");
  std::vector<double> upper(IsingProblem::pair_count(n));
  for (auto& j : upper) j = rng.uniform_open(-1.0, 1.0);
  std::vector<double> fields(n);
  for (auto& h : fields) h = rng.uniform_open(-1.0, 1.0);
  return IsingProblem(std::move(id), n, upper, std::move(fields));
}

InstanceSet generate_set(std::size_t n, std::size_t count, std::uint64_t seed,
                         const std::string& kind) {
  RLQLS_REQUIRE(count >= 1, "instance count must be positive");
  InstanceSet set;
  set.seed = seed;
  set.kind = kind;
  Rng rng(seed, "instances", {n});
  set.problems.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    char id[64];
    std::snprintf(id, sizeof id, "%s-n%zu-%05zu", kind.c_str(), n, k);
    set.problems.push_back(generate_instance(n, rng, id));
  }
  return set;
}

GroundState gse_exhaustive(const IsingProblem& problem) {
  const std::size_t n = problem.n();
  if (n > kMaxExhaustiveN) {
    throw CapacityError("gse_exhaustive is capped at n = 24 (got n = " + std::to_string(n) +
                        "); use gse_tabu for larger instances");
  }
  // Gray-code walk starting from all spins down; step k flips the lowest set
  // bit of k. Local fields make each step O(n).
  std::vector<double> s(n, -1.0);
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) {
    f[i] = problem.field(i);
    for (std::size_t j = 0; j < n; ++j) f[i] += problem.coupling(i, j) * s[j];
  }
  double e = energy(problem, SpinConfig(std::vector<Spin>(n, -1)));
  double best = e;
  std::uint64_t best_code = 0;
  std::uint64_t code = 0;
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t step = 1; step < total; ++step) {
    const auto k = static_cast<std::size_t>(std::countr_zero(step));
    e += -2.0 * s[k] * f[k];
    s[k] = -s[k];
    const auto row = problem.row(k);
    const double twice = 2.0 * s[k];
    for (std::size_t j = 0; j < n; ++j) f[j] += twice * row[j];
    code ^= std::uint64_t{1} << k;
    if (e < best) {
      best = e;
      best_code = code;
    }
  }
  std::vector<Spin> spins(n);
  for (std::size_t i = 0; i < n; ++i) spins[i] = (best_code >> i) & 1 ? 1 : -1;
  SpinConfig config(std::move(spins));
  const double exact = energy(problem, config);
  return {exact, std::move(config)};
}

GroundState gse_tabu(const IsingProblem& problem, const TabuParams& params, Rng& rng) {
  const std::size_t n = problem.n();
  RLQLS_REQUIRE(n >= 2, "gse_tabu requires n >= 2");
  RLQLS_REQUIRE(params.restarts >= 1, "gse_tabu requires at least one restart");
  // A tenure close to n leaves no admissible move; cap it at n/4.
  const std::size_t tenure = std::max<std::size_t>(1, std::min(params.tenure, n / 4));
  const std::size_t iterations =
      params.iterations_per_restart ? params.iterations_per_restart : 50 * n;

  GroundState best{std::numeric_limits<double>::infinity(), {}};
  std::vector<double> f(n);
  std::vector<std::size_t> tabu_until(n);
  for (std::size_t restart = 0; restart < params.restarts; ++restart) {
    SpinConfig start = SpinConfig::random(n, rng);
    std::vector<double> s(start.spins().begin(), start.spins().end());
    for (std::size_t i = 0; i < n; ++i) f[i] = local_field(problem, start, i);
    double e = energy(problem, start);
    double run_best = e;
    std::vector<double> run_best_s = s;
    std::fill(tabu_until.begin(), tabu_until.end(), 0);

    for (std::size_t it = 1; it <= iterations; ++it) {
      std::size_t move = n;
      double move_delta = std::numeric_limits<double>::infinity();
      std::size_t oldest = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = -2.0 * s[i] * f[i];
        const bool admissible = tabu_until[i] < it || e + d < run_best;
        if (admissible && d < move_delta) {
          move = i;
          move_delta = d;
        }
        if (tabu_until[i] < tabu_until[oldest]) oldest = i;
      }
      if (move == n) {
        move = oldest;
        move_delta = -2.0 * s[move] * f[move];
      }
      e += move_delta;
      s[move] = -s[move];
      const auto row = problem.row(move);
      const double twice = 2.0 * s[move];
      for (std::size_t j = 0; j < n; ++j) f[j] += twice * row[j];
      tabu_until[move] = it + tenure;
      if (e < run_best) {
        run_best = e;
        run_best_s = s;
      }
    }
    if (run_best < best.energy) {
      std::vector<Spin> spins(n);
      for (std::size_t i = 0; i < n; ++i) spins[i] = run_best_s[i] > 0 ? 1 : -1;
      best.config = SpinConfig(std::move(spins));
      best.energy = run_best;
    }
  }
  best.energy = energy(problem, best.config);
  return best;
}

GseRef annotate_gse(IsingProblem& problem, GseMethod method, std::uint64_t seed,
                    const TabuParams& params) {
  if (method == GseMethod::kAuto)
    method = problem.n() <= kMaxExhaustiveN ? GseMethod::kExhaustive : GseMethod::kTabu;
  GseRef ref;
  if (method == GseMethod::kExhaustive) {
    ref = {gse_exhaustive(problem).energy, GseProvenance::kExhaustive};
  } else {
    Rng rng(seed, "gse-tabu", {fnv1a64(problem.id())});
    ref = {gse_tabu(problem, params, rng).energy, GseProvenance::kTabu};
  }
  problem.set_gse_ref(ref);
  return ref;
}

}  // namespace rlqls
