#include "rlqls/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "rlqls/error.hpp"
#include "rlqls/io.hpp"

namespace rlqls {

std::size_t encoded_size(std::size_t n) { return IsingProblem::pair_count(n) + 3 * n; }

Architecture default_architecture(std::size_t n, std::vector<std::size_t> hidden) {
  return Architecture{encoded_size(n), std::move(hidden), n, "tanh"};
}

NetParams::NetParams(Architecture arch) : arch_(std::move(arch)) {
  RLQLS_REQUIRE(arch_.input > 0 && arch_.n_actions > 0, "architecture needs input and output sizes");
  RLQLS_REQUIRE(arch_.activation == "tanh", "only tanh activations are supported");
  std::size_t offset = 0;
  auto add = [&](std::size_t in, std::size_t out) {
    RLQLS_REQUIRE(out > 0, "layer widths must be positive");
    slots_.push_back({in, out, offset, offset + in * out});
    offset += in * out + out;
  };
  std::size_t width = arch_.input;
  for (std::size_t h : arch_.hidden) {
    add(width, h);
    width = h;
  }
  add(width, arch_.n_actions);
  add(width, 1);
  values_.assign(offset, 0.0);
}

NetParams NetParams::initialize(Architecture arch, Rng& rng) {
  NetParams p(std::move(arch));
  for (const auto& s : p.slots_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
    for (std::size_t k = 0; k < s.in * s.out; ++k)
      p.values_[s.weight_offset + k] = limit * (2.0 * rng.uniform() - 1.0);
  }
  return p;
}

Eigen::Map<const RowMatrix> NetParams::weight(std::size_t slot) const {
  const auto& s = slots_.at(slot);
  return {values_.data() + s.weight_offset, static_cast<Eigen::Index>(s.out),
          static_cast<Eigen::Index>(s.in)};
}

Eigen::Map<RowMatrix> NetParams::weight(std::size_t slot) {
  const auto& s = slots_.at(slot);
  return {values_.data() + s.weight_offset, static_cast<Eigen::Index>(s.out),
          static_cast<Eigen::Index>(s.in)};
}

Eigen::Map<const Eigen::RowVectorXd> NetParams::bias(std::size_t slot) const {
  const auto& s = slots_.at(slot);
  return {values_.data() + s.bias_offset, static_cast<Eigen::Index>(s.out)};
}

Eigen::Map<Eigen::RowVectorXd> NetParams::bias(std::size_t slot) {
  const auto& s = slots_.at(slot);
  return {values_.data() + s.bias_offset, static_cast<Eigen::Index>(s.out)};
}

void encode_into(const std::vector<double>& graph, const SpinConfig& current,
                 const SpinConfig& previous, std::span<double> out) {
  const std::size_t n = current.size();
  RLQLS_REQUIRE(previous.size() == n, "current and previous configs differ in length");
  RLQLS_REQUIRE(out.size() == graph.size() + 2 * n, "encoding buffer has the wrong size");
  std::copy(graph.begin(), graph.end(), out.begin());
  double* p = out.data() + graph.size();
  for (std::size_t i = 0; i < n; ++i) p[i] = current[i];
  for (std::size_t i = 0; i < n; ++i) p[n + i] = previous[i];
}

std::vector<double> encode(const AgentState& state) {
  RLQLS_REQUIRE(state.graph != nullptr, "state has no graph features");
  std::vector<double> out(state.graph->size() + 2 * state.current.size());
  encode_into(*state.graph, state.current, state.previous, out);
  return out;
}

ForwardCache forward_batch(const NetParams& params, const RowMatrix& inputs) {
  RLQLS_REQUIRE(static_cast<std::size_t>(inputs.cols()) == params.arch().input,
                "feature length does not match the network input");
  ForwardCache cache;
  cache.activations.reserve(params.trunk_depth() + 1);
  cache.activations.push_back(inputs);
  for (std::size_t k = 0; k < params.trunk_depth(); ++k) {
    RowMatrix z = cache.activations.back() * params.weight(k).transpose();
    z.rowwise() += params.bias(k);
    cache.activations.push_back(z.array().tanh().matrix());
  }
  const RowMatrix& top = cache.activations.back();
  cache.logits = top * params.weight(params.policy_slot()).transpose();
  cache.logits.rowwise() += params.bias(params.policy_slot());
  cache.values = top * params.weight(params.value_slot()).row(0).transpose();
  cache.values.array() += params.bias(params.value_slot())(0);
  return cache;
}

PolicyOutput forward(const NetParams& params, std::span<const double> features) {
  RLQLS_REQUIRE(features.size() == params.arch().input,
                "feature length does not match the network input");
  const RowMatrix x = Eigen::Map<const RowMatrix>(features.data(), 1,
                                                  static_cast<Eigen::Index>(features.size()));
  const ForwardCache cache = forward_batch(params, x);
  PolicyOutput out;
  out.logits.assign(cache.logits.data(), cache.logits.data() + cache.logits.cols());
  out.value = cache.values(0);
  return out;
}

void backward_batch(const NetParams& params, const ForwardCache& cache,
                    const RowMatrix& grad_logits, const Eigen::VectorXd& grad_values,
                    std::span<double> grad) {
  RLQLS_REQUIRE(grad.size() == params.size(), "gradient buffer has the wrong size");
  const Eigen::Index rows = cache.logits.rows();
  RLQLS_REQUIRE(grad_logits.rows() == rows && grad_logits.cols() == cache.logits.cols() &&
                    grad_values.size() == rows,
                "upstream gradient shape mismatch");
  const auto& slots = params.slots();
  auto gw = [&](std::size_t k) {
    return Eigen::Map<RowMatrix>(grad.data() + slots[k].weight_offset,
                                 static_cast<Eigen::Index>(slots[k].out),
                                 static_cast<Eigen::Index>(slots[k].in));
  };
  auto gb = [&](std::size_t k) {
    return Eigen::Map<Eigen::RowVectorXd>(grad.data() + slots[k].bias_offset,
                                          static_cast<Eigen::Index>(slots[k].out));
  };

  const RowMatrix& top = cache.activations.back();
  const std::size_t ps = params.policy_slot();
  const std::size_t vs = params.value_slot();
  gw(ps).noalias() += grad_logits.transpose() * top;
  gb(ps) += grad_logits.colwise().sum();
  gw(vs).noalias() += grad_values.transpose() * top;
  gb(vs)(0) += grad_values.sum();

  RowMatrix g = grad_logits * params.weight(ps);
  g.noalias() += grad_values * params.weight(vs);
  for (std::size_t k = params.trunk_depth(); k-- > 0;) {
    const RowMatrix& h = cache.activations[k + 1];
    g.array() *= 1.0 - h.array().square();
    gw(k).noalias() += g.transpose() * cache.activations[k];
    gb(k) += g.colwise().sum();
    if (k > 0) g = g * params.weight(k);
  }
}

namespace {

// log-sum-exp over entries not yet drawn.
double masked_lse(std::span<const double> logits, const std::vector<char>& taken) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (!taken[i]) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (!taken[i]) sum += std::exp(logits[i] - mx);
  return mx + std::log(sum);
}

void check_action(std::span<const double> logits, const ActionChoice& action) {
  validate_action(action, logits.size(), action.indices.size());
}

}  // namespace

std::pair<ActionChoice, double> sample_action(const PolicyOutput& output, std::size_t m, Rng& rng) {
  const auto& logits = output.logits;
  const std::size_t n = logits.size();
  RLQLS_REQUIRE(m <= n, "cannot draw more indices than there are logits");
  std::vector<char> taken(n, 0);
  ActionChoice action;
  action.indices.reserve(m);
  double log_prob = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double lse = masked_lse(logits, taken);
    const double u = rng.uniform();
    double cum = 0.0;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      pick = i;  // falls through to the last free index on round-off
      cum += std::exp(logits[i] - lse);
      if (u < cum) break;
    }
    taken[pick] = 1;
    action.indices.push_back(pick);
    log_prob += logits[pick] - lse;
  }
  return {std::move(action), log_prob};
}

std::pair<ActionChoice, double> greedy_action(const PolicyOutput& output, std::size_t m) {
  const auto& logits = output.logits;
  const std::size_t n = logits.size();
  RLQLS_REQUIRE(m <= n, "cannot draw more indices than there are logits");
  std::vector<char> taken(n, 0);
  ActionChoice action;
  double log_prob = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double lse = masked_lse(logits, taken);
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i)
      if (!taken[i] && (pick == n || logits[i] > logits[pick])) pick = i;
    taken[pick] = 1;
    action.indices.push_back(pick);
    log_prob += logits[pick] - lse;
  }
  return {std::move(action), log_prob};
}

double log_prob_of(std::span<const double> logits, const ActionChoice& action) {
  check_action(logits, action);
  std::vector<char> taken(logits.size(), 0);
  double log_prob = 0.0;
  for (std::size_t q : action.indices) {
    log_prob += logits[q] - masked_lse(logits, taken);
    taken[q] = 1;
  }
  return log_prob;
}

double log_prob_of(const PolicyOutput& output, const ActionChoice& action) {
  return log_prob_of(std::span<const double>(output.logits), action);
}

void add_log_prob_grad(std::span<const double> logits, const ActionChoice& action, double coeff,
                       std::span<double> out) {
  check_action(logits, action);
  RLQLS_REQUIRE(out.size() == logits.size(), "gradient buffer has the wrong size");
  std::vector<char> taken(logits.size(), 0);
  for (std::size_t q : action.indices) {
    const double lse = masked_lse(logits, taken);
    for (std::size_t i = 0; i < logits.size(); ++i)
      if (!taken[i]) out[i] -= coeff * std::exp(logits[i] - lse);
    out[q] += coeff;
    taken[q] = 1;
  }
}

double first_draw_entropy(std::span<const double> logits) {
  const std::vector<char> none(logits.size(), 0);
  const double lse = masked_lse(logits, none);
  double h = 0.0;
  for (double l : logits) {
    const double lp = l - lse;
    h -= std::exp(lp) * lp;
  }
  return h;
}

void add_entropy_grad(std::span<const double> logits, double coeff, std::span<double> out) {
  RLQLS_REQUIRE(out.size() == logits.size(), "gradient buffer has the wrong size");
  const std::vector<char> none(logits.size(), 0);
  const double lse = masked_lse(logits, none);
  const double h = first_draw_entropy(logits);
  // dH/dl_i = -p_i (log p_i + H)
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double lp = logits[i] - lse;
    out[i] += coeff * -std::exp(lp) * (lp + h);
  }
}

std::vector<double> backward(const NetParams& params, std::span<const double> features,
                             const ActionChoice& action, double c_pg, double c_v) {
  RLQLS_REQUIRE(features.size() == params.arch().input,
                "feature length does not match the network input");
  const RowMatrix x = Eigen::Map<const RowMatrix>(features.data(), 1,
                                                  static_cast<Eigen::Index>(features.size()));
  const ForwardCache cache = forward_batch(params, x);
  RowMatrix g_logits = RowMatrix::Zero(1, cache.logits.cols());
  if (c_pg != 0.0) {
    const std::span<const double> logits(cache.logits.data(),
                                         static_cast<std::size_t>(cache.logits.cols()));
    add_log_prob_grad(logits, action, c_pg,
                      std::span<double>(g_logits.data(), logits.size()));
  }
  Eigen::VectorXd g_values = Eigen::VectorXd::Constant(1, c_v);
  std::vector<double> grad(params.size(), 0.0);
  backward_batch(params, cache, g_logits, g_values, grad);
  return grad;
}

void optimizer_step(NetParams& params, std::span<const double> grad, RmsPropState& state,
                    const RmsPropHyper& hyper) {
  RLQLS_REQUIRE(grad.size() == params.size(), "gradient size does not match parameters");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw TrainingError("non-finite gradient at parameter " + std::to_string(i) + " of " +
                          std::to_string(grad.size()) + " (value " + format_double(grad[i]) + ")");
    }
  }
  if (state.accumulator.size() != grad.size()) state.accumulator.assign(grad.size(), 0.0);
  auto p = params.flat();
  for (std::size_t i = 0; i < grad.size(); ++i) {
    double& acc = state.accumulator[i];
    acc = hyper.decay * acc + (1.0 - hyper.decay) * grad[i] * grad[i];
    p[i] -= hyper.learning_rate * grad[i] / std::sqrt(acc + hyper.epsilon);
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto& arch = ckpt.params.arch();
  nlohmann::ordered_json j;
  std::vector<std::size_t> layers{arch.input};
  layers.insert(layers.end(), arch.hidden.begin(), arch.hidden.end());
  layers.push_back(arch.n_actions);
  j["arch"] = layers;
  j["activation"] = arch.activation;
  j["n"] = ckpt.n;
  j["m"] = ckpt.m;
  j["version"] = ckpt.params.version;
  j["params"] = std::vector<double>(ckpt.params.flat().begin(), ckpt.params.flat().end());
  write_text_file(path, j.dump() + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    const auto j = nlohmann::json::parse(read_text_file(path));
    const auto layers = j.at("arch").get<std::vector<std::size_t>>();
    RLQLS_REQUIRE(layers.size() >= 2, "checkpoint arch needs input and output sizes");
    Architecture arch;
    arch.input = layers.front();
    arch.hidden.assign(layers.begin() + 1, layers.end() - 1);
    arch.n_actions = layers.back();
    arch.activation = j.value("activation", std::string("tanh"));
    Checkpoint ckpt{NetParams(arch), j.at("n").get<std::size_t>(), j.at("m").get<std::size_t>()};
    const auto values = j.at("params").get<std::vector<double>>();
    RLQLS_REQUIRE(values.size() == ckpt.params.size(), "checkpoint parameter count mismatch");
    RLQLS_REQUIRE(arch.n_actions == ckpt.n && arch.input == encoded_size(ckpt.n),
                  "checkpoint architecture does not match its n");
    std::copy(values.begin(), values.end(), ckpt.params.flat().begin());
    ckpt.params.version = j.at("version").get<std::uint64_t>();
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw ContractError("malformed checkpoint " + path.string() + ": " + e.what());
  }
}

Policy make_net_policy(std::shared_ptr<const NetParams> params, std::size_t m, bool greedy) {
  return [params = std::move(params), m, greedy](const AgentState& state, Rng& rng) {
    const PolicyOutput out = forward(*params, encode(state));
    return greedy ? greedy_action(out, m) : sample_action(out, m, rng);
  };
}

}  // namespace rlqls
