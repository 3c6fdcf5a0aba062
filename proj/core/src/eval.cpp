#include "rlqls/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "rlqls/error.hpp"
#include "rlqls/io.hpp"

namespace rlqls {

std::size_t EvalReport::policy_index(const std::string& name) const {
  const auto it = std::find(policies.begin(), policies.end(), name);
  if (it == policies.end()) throw ContractError("no policy named '" + name + "' in report");
  return static_cast<std::size_t>(it - policies.begin());
}

PairedStats paired_one_sided_test(const std::string& candidate, const std::string& baseline,
                                  const std::vector<double>& candidate_values,
                                  const std::vector<double>& baseline_values) {
  RLQLS_REQUIRE(candidate_values.size() == baseline_values.size(), "paired samples differ in size");
  PairedStats s{candidate, baseline, candidate_values.size()};
  const std::size_t k = s.pairs;
  if (k == 0) return s;
  std::vector<double> d(k);
  for (std::size_t i = 0; i < k; ++i) d[i] = candidate_values[i] - baseline_values[i];
  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= static_cast<double>(k);
  s.mean_difference = mean;
  if (k < 2) return s;
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(k - 1));
  s.standard_error = sd / std::sqrt(static_cast<double>(k));
  if (s.standard_error == 0.0) {
    // Degenerate: every difference identical.
    s.t_statistic = mean > 0 ? INFINITY : (mean < 0 ? -INFINITY : 0.0);
    s.p_value = mean > 0 ? 0.0 : 1.0;
    return s;
  }
  s.t_statistic = mean / s.standard_error;
  const boost::math::students_t dist(static_cast<double>(k - 1));
  s.p_value = boost::math::cdf(boost::math::complement(dist, s.t_statistic));
  return s;
}

EvalReport evaluate(const InstanceSet& instances, const std::vector<NamedPolicy>& policies,
                    const EvalSettings& settings) {
  RLQLS_REQUIRE(!policies.empty(), "nothing to compare: no policies given");
  RLQLS_REQUIRE(!instances.problems.empty(), "evaluation needs at least one problem");
  RLQLS_REQUIRE(settings.steps >= 1 && settings.repeats >= 1, "steps and repeats must be positive");
  for (const auto& p : instances.problems) {
    if (!p.gse_ref())
      throw ConfigError("problem '" + p.id() + "' has no gse_ref; run `rlqls gse` first");
    if (settings.m > p.n())
      throw ConfigError("sub-problem size exceeds problem size on '" + p.id() + "'");
  }

  const std::size_t np = policies.size();
  const std::size_t nq = instances.problems.size();
  const std::size_t reps = settings.repeats;
  const std::size_t steps = settings.steps;

  EvalReport rep;
  rep.settings = settings;
  for (const auto& p : policies) rep.policies.push_back(p.name);
  for (const auto& q : instances.problems) rep.problem_ids.push_back(q.id());
  auto shape = [&] {
    return std::vector(np, std::vector(nq, std::vector(reps, std::vector<double>(steps))));
  };
  rep.best_ratio = shape();
  rep.current_ratio = shape();

  std::vector<std::shared_ptr<const IsingProblem>> problems;
  for (const auto& q : instances.problems) problems.push_back(std::make_shared<const IsingProblem>(q));

  const std::size_t total = np * nq * reps;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> refined{false};
  std::vector<std::exception_ptr> errors(total);
  auto worker = [&] {
    for (std::size_t task = next++; task < total; task = next++) {
      const std::size_t pol = task / (nq * reps);
      const std::size_t q = (task / reps) % nq;
      const std::size_t r = task % reps;
      try {
        QlsEnv env(problems[q], EnvConfig{settings.m, steps, std::nullopt, settings.seed});
        // Shared initial state per (problem, repeat); policy-specific action
        // and acceptance streams.
        const std::uint64_t pair_key = derive_seed(fnv1a64(problems[q]->id()), "repeat", {r});
        EpisodeStreams streams =
            EpisodeStreams::derive(settings.seed, pair_key, fnv1a64(policies[pol].name));
        const EpisodeResult ep = run_episode(env, policies[pol].policy, streams);
        auto& best = rep.best_ratio[pol][q][r];
        auto& cur = rep.current_ratio[pol][q][r];
        for (std::size_t t = 0; t < steps; ++t) {
          best[t] = ep.records[t].best_energy / env.gse();
          cur[t] = ep.records[t].energy / env.gse();
        }
        if (env.gse_refined()) refined = true;
      } catch (...) {
        errors[task] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(settings.threads, 1, total);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  rep.gse_refined = refined;

  const double denom = static_cast<double>(nq * reps);
  rep.best_curve.assign(np, std::vector<double>(steps, 0.0));
  rep.current_curve.assign(np, std::vector<double>(steps, 0.0));
  rep.finals.assign(np, std::vector<double>(nq, 0.0));
  rep.final_means.assign(np, 0.0);
  for (std::size_t pol = 0; pol < np; ++pol) {
    for (std::size_t t = 0; t < steps; ++t) {
      double b = 0.0, c = 0.0;
      for (std::size_t q = 0; q < nq; ++q)
        for (std::size_t r = 0; r < reps; ++r) {
          b += rep.best_ratio[pol][q][r][t];
          c += rep.current_ratio[pol][q][r][t];
        }
      rep.best_curve[pol][t] = b / denom;
      rep.current_curve[pol][t] = c / denom;
    }
    double all = 0.0;
    for (std::size_t q = 0; q < nq; ++q) {
      double f = 0.0;
      for (std::size_t r = 0; r < reps; ++r) f += rep.best_ratio[pol][q][r][steps - 1];
      rep.finals[pol][q] = f / static_cast<double>(reps);
      all += rep.finals[pol][q];
    }
    rep.final_means[pol] = all / static_cast<double>(nq);
  }
  for (std::size_t pol = 1; pol < np; ++pol)
    rep.comparisons.push_back(
        paired_one_sided_test(rep.policies[pol], rep.policies[0], rep.finals[pol], rep.finals[0]));
  return rep;
}

namespace {

void write_curve(const std::filesystem::path& path, const EvalReport& rep,
                 const std::vector<std::vector<double>>& curve) {
  std::ostringstream os;
  os << "step";
  for (const auto& p : rep.policies) os << ',' << p;
  os << '\n';
  for (std::size_t t = 0; t < rep.settings.steps; ++t) {
    os << (t + 1);
    for (std::size_t pol = 0; pol < rep.policies.size(); ++pol) os << ',' << format_double(curve[pol][t]);
    os << '\n';
  }
  write_text_file(path, os.str());
}

}  // namespace

std::string summarize(const EvalReport& rep, const std::filesystem::path& dir) {
  if (rep.policies.empty()) throw ContractError("nothing to compare: report has no policies");
  std::filesystem::create_directories(dir);
  write_curve(dir / "curves.csv", rep, rep.best_curve);
  write_curve(dir / "curves_current.csv", rep, rep.current_curve);

  {
    std::ofstream os(dir / "series.csv", std::ios::binary | std::ios::trunc);
    os << "policy,problem_id,repeat,step,best_ratio,current_ratio\n";
    for (std::size_t pol = 0; pol < rep.policies.size(); ++pol)
      for (std::size_t q = 0; q < rep.problem_ids.size(); ++q)
        for (std::size_t r = 0; r < rep.settings.repeats; ++r)
          for (std::size_t t = 0; t < rep.settings.steps; ++t)
            os << rep.policies[pol] << ',' << rep.problem_ids[q] << ',' << r << ',' << (t + 1) << ','
               << format_double(rep.best_ratio[pol][q][r][t]) << ','
               << format_double(rep.current_ratio[pol][q][r][t]) << '\n';
  }
  {
    std::ostringstream os;
    os << "problem_id";
    for (const auto& p : rep.policies) os << ',' << p;
    os << '\n';
    for (std::size_t q = 0; q < rep.problem_ids.size(); ++q) {
      os << rep.problem_ids[q];
      for (std::size_t pol = 0; pol < rep.policies.size(); ++pol)
        os << ',' << format_double(rep.finals[pol][q]);
      os << '\n';
    }
    write_text_file(dir / "finals.csv", os.str());
  }

  std::ostringstream s;
  s << "problems: " << rep.problem_ids.size() << "  steps: " << rep.settings.steps
    << "  repeats: " << rep.settings.repeats << "  m: " << rep.settings.m
    << "  seed: " << rep.settings.seed << '\n';
  for (std::size_t pol = 0; pol < rep.policies.size(); ++pol)
    s << "final mean best-so-far ratio [" << rep.policies[pol] << "]: "
      << format_double(rep.final_means[pol]) << '\n';
  for (const auto& c : rep.comparisons) {
    const bool better = c.mean_difference > 0 && c.p_value < kSignificanceLevel;
    s << "paired " << c.candidate << " - " << c.baseline << ": mean diff "
      << format_double(c.mean_difference) << ", se " << format_double(c.standard_error) << ", t "
      << format_double(c.t_statistic) << ", one-sided p " << format_double(c.p_value) << " -> "
      << (better ? "candidate better (p < 0.05)" : "no significant improvement") << '\n';
  }
  if (rep.gse_refined) s << "note: at least one heuristic gse_ref was undercut during evaluation\n";
  write_text_file(dir / "summary.txt", s.str());
  return s.str();
}

}  // namespace rlqls
