#include "rlqls/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <sstream>

#include "rlqls/error.hpp"
#include "rlqls/io.hpp"

namespace rlqls {
namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_uint(const std::string& s, std::uint64_t& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

bool parse_real(const std::string& s, double& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size() && std::isfinite(out);
}

using Setter = std::function<bool(TrainConfig&, const std::string&)>;

Setter size_field(std::size_t TrainConfig::*field) {
  return [field](TrainConfig& c, const std::string& v) {
    std::uint64_t x = 0;
    if (!parse_uint(v, x)) return false;
    c.*field = static_cast<std::size_t>(x);
    return true;
  };
}

template <typename F>
Setter real_field(F get) {
  return [get](TrainConfig& c, const std::string& v) {
    double x = 0;
    if (!parse_real(v, x)) return false;
    get(c) = x;
    return true;
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"n", size_field(&TrainConfig::n)},
      {"m", size_field(&TrainConfig::m)},
      {"train_count", size_field(&TrainConfig::train_count)},
      {"train_seed",
       [](TrainConfig& c, const std::string& v) { return parse_uint(v, c.train_seed); }},
      {"train_set",
       [](TrainConfig& c, const std::string& v) {
         c.train_set = v;
         return true;
       }},
      {"episodes_per_iteration", size_field(&TrainConfig::episodes_per_iteration)},
      {"episode_len", size_field(&TrainConfig::episode_len)},
      {"actors", size_field(&TrainConfig::actors)},
      {"discount", real_field([](TrainConfig& c) -> double& { return c.loss.discount; })},
      {"rho_clip", real_field([](TrainConfig& c) -> double& { return c.loss.rho_clip; })},
      {"value_weight", real_field([](TrainConfig& c) -> double& { return c.loss.value_weight; })},
      {"entropy_weight",
       real_field([](TrainConfig& c) -> double& { return c.loss.entropy_weight; })},
      {"reward_scale", real_field([](TrainConfig& c) -> double& { return c.loss.reward_scale; })},
      {"learning_rate",
       real_field([](TrainConfig& c) -> double& { return c.optimizer.learning_rate; })},
      {"rms_decay", real_field([](TrainConfig& c) -> double& { return c.optimizer.decay; })},
      {"rms_epsilon", real_field([](TrainConfig& c) -> double& { return c.optimizer.epsilon; })},
      {"hidden",
       [](TrainConfig& c, const std::string& v) {
         std::vector<std::size_t> sizes;
         std::stringstream ss(v);
         std::string part;
         while (std::getline(ss, part, ',')) {
           std::uint64_t x = 0;
           if (!parse_uint(trim(part), x) || x == 0) return false;
           sizes.push_back(static_cast<std::size_t>(x));
         }
         if (sizes.empty()) return false;
         c.hidden = std::move(sizes);
         return true;
       }},
      {"learner_batch", size_field(&TrainConfig::learner_batch)},
      {"iterations", size_field(&TrainConfig::iterations)},
      {"eval_every", size_field(&TrainConfig::eval_every)},
      {"eval_count", size_field(&TrainConfig::eval_count)},
      {"checkpoint_every", size_field(&TrainConfig::checkpoint_every)},
      {"max_actor_failures", size_field(&TrainConfig::max_actor_failures)},
      {"out_dir",
       [](TrainConfig& c, const std::string& v) {
         c.out_dir = v;
         return true;
       }},
      {"seed", [](TrainConfig& c, const std::string& v) { return parse_uint(v, c.seed); }},
  };
  return table;
}

}  // namespace

KeyValues parse_key_values(const std::string& text, std::vector<std::string>& errors) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(lineno) + ": expected `key = value`");
      continue;
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      errors.push_back("line " + std::to_string(lineno) + ": empty key");
      continue;
    }
    if (kv.count(key)) errors.push_back("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    kv[key] = value;
  }
  return kv;
}

void apply_train_config(const KeyValues& kv, TrainConfig& cfg, std::vector<std::string>& errors) {
  const auto& table = setters();
  for (const auto& [key, value] : kv) {
    const auto it = table.find(key);
    if (it == table.end()) {
      errors.push_back("unknown key '" + key + "'");
    } else if (!it->second(cfg, value)) {
      errors.push_back("invalid value '" + value + "' for key '" + key + "'");
    }
  }
}

void check_train_config(const TrainConfig& c, std::vector<std::string>& errors) {
  if (c.n < 2) errors.push_back("n must be at least 2");
  if (c.m < 1 || c.m > c.n) errors.push_back("m must satisfy 1 <= m <= n");
  if (c.m > 20) errors.push_back("m must be at most 20 (exact sub-solver cap)");
  if (c.train_count < 1 && c.train_set.empty()) errors.push_back("train_count must be positive");
  if (c.episodes_per_iteration < 1) errors.push_back("episodes_per_iteration must be positive");
  if (c.episode_len < 1) errors.push_back("episode_len must be positive");
  if (c.actors < 1) errors.push_back("actors must be positive");
  if (c.loss.discount < 0.0 || c.loss.discount > 1.0) errors.push_back("discount must lie in [0, 1]");
  if (c.loss.rho_clip <= 0.0) errors.push_back("rho_clip must be positive");
  if (c.loss.value_weight <= 0.0) errors.push_back("value_weight must be positive");
  if (c.loss.entropy_weight < 0.0) errors.push_back("entropy_weight must be non-negative");
  if (c.loss.reward_scale <= 0.0) errors.push_back("reward_scale must be positive");
  if (c.optimizer.learning_rate <= 0.0) errors.push_back("learning_rate must be positive");
  if (c.optimizer.decay < 0.0 || c.optimizer.decay >= 1.0) errors.push_back("rms_decay must lie in [0, 1)");
  if (c.optimizer.epsilon <= 0.0) errors.push_back("rms_epsilon must be positive");
  if (c.eval_every > 0 && c.eval_count < 1) errors.push_back("eval_count must be positive");
}

TrainConfig load_train_config(const std::string& path, const KeyValues& overrides) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  std::vector<std::string> errors;
  KeyValues kv = parse_key_values(text, errors);
  for (const auto& [k, v] : overrides) kv[k] = v;
  TrainConfig cfg;
  apply_train_config(kv, cfg, errors);
  check_train_config(cfg, errors);
  if (!errors.empty()) {
    std::string msg = "invalid training config " + path + ":";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

std::string to_key_values(const TrainConfig& c) {
  std::ostringstream os;
  std::string hidden;
  for (std::size_t i = 0; i < c.hidden.size(); ++i) hidden += (i ? "," : "") + std::to_string(c.hidden[i]);
  os << "n = " << c.n << "\nm = " << c.m << "\ntrain_count = " << c.train_count
     << "\ntrain_seed = " << c.train_seed << "\ntrain_set = " << c.train_set
     << "\nepisodes_per_iteration = " << c.episodes_per_iteration
     << "\nepisode_len = " << c.episode_len << "\nactors = " << c.actors
     << "\ndiscount = " << format_double(c.loss.discount)
     << "\nrho_clip = " << format_double(c.loss.rho_clip)
     << "\nvalue_weight = " << format_double(c.loss.value_weight)
     << "\nentropy_weight = " << format_double(c.loss.entropy_weight)
     << "\nreward_scale = " << format_double(c.loss.reward_scale)
     << "\nlearning_rate = " << format_double(c.optimizer.learning_rate)
     << "\nrms_decay = " << format_double(c.optimizer.decay)
     << "\nrms_epsilon = " << format_double(c.optimizer.epsilon) << "\nhidden = " << hidden
     << "\nlearner_batch = " << c.learner_batch << "\niterations = " << c.iterations
     << "\neval_every = " << c.eval_every << "\neval_count = " << c.eval_count
     << "\ncheckpoint_every = " << c.checkpoint_every
     << "\nmax_actor_failures = " << c.max_actor_failures << "\nout_dir = " << c.out_dir
     << "\nseed = " << c.seed << '\n';
  return os.str();
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["n"] = c.n;
  j["m"] = c.m;
  j["train_count"] = c.train_count;
  j["train_seed"] = c.train_seed;
  j["train_set"] = c.train_set;
  j["episodes_per_iteration"] = c.episodes_per_iteration;
  j["episode_len"] = c.episode_len;
  j["actors"] = c.actors;
  j["discount"] = c.loss.discount;
  j["rho_clip"] = c.loss.rho_clip;
  j["value_weight"] = c.loss.value_weight;
  j["entropy_weight"] = c.loss.entropy_weight;
  j["reward_scale"] = c.loss.reward_scale;
  j["learning_rate"] = c.optimizer.learning_rate;
  j["rms_decay"] = c.optimizer.decay;
  j["rms_epsilon"] = c.optimizer.epsilon;
  j["hidden"] = c.hidden;
  j["learner_batch"] = c.learner_batch;
  j["iterations"] = c.iterations;
  j["eval_every"] = c.eval_every;
  j["eval_count"] = c.eval_count;
  j["checkpoint_every"] = c.checkpoint_every;
  j["max_actor_failures"] = c.max_actor_failures;
  j["out_dir"] = c.out_dir;
  j["seed"] = c.seed;
  return j;
}

}  // namespace rlqls
