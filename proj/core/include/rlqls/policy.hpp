#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rlqls/env.hpp"
#include "rlqls/rng.hpp"

namespace rlqls {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Shared tanh trunk with a policy head (n_actions logits) and a scalar
/// value head, both reading the last trunk layer.
struct Architecture {
  std::size_t input = 0;
  std::vector<std::size_t> hidden{256, 128};
  std::size_t n_actions = 0;
  std::string activation = "tanh";

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Input width for problem size n: n(n-1)/2 + n graph entries, then two configs.
std::size_t encoded_size(std::size_t n);
Architecture default_architecture(std::size_t n, std::vector<std::size_t> hidden = {256, 128});

/// All weights in one flat buffer, layer order: trunk layers, policy head,
/// value head; each layer stores its row-major (out x in) weight then bias.
class NetParams {
 public:
  struct Slot {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;
  };

  NetParams() = default;
  explicit NetParams(Architecture arch);  // all zeros

  /// Glorot-uniform weights, zero biases.
  static NetParams initialize(Architecture arch, Rng& rng);

  const Architecture& arch() const { return arch_; }
  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }
  std::size_t size() const { return values_.size(); }

  const std::vector<Slot>& slots() const { return slots_; }
  std::size_t trunk_depth() const { return arch_.hidden.size(); }
  std::size_t policy_slot() const { return trunk_depth(); }
  std::size_t value_slot() const { return trunk_depth() + 1; }

  Eigen::Map<const RowMatrix> weight(std::size_t slot) const;
  Eigen::Map<RowMatrix> weight(std::size_t slot);
  Eigen::Map<const Eigen::RowVectorXd> bias(std::size_t slot) const;
  Eigen::Map<Eigen::RowVectorXd> bias(std::size_t slot);

  std::uint64_t version = 0;

 private:
  Architecture arch_;
  std::vector<Slot> slots_;
  std::vector<double> values_;
};

struct PolicyOutput {
  std::vector<double> logits;
  double value = 0.0;
};

/// [graph | current | previous], spins as +/-1.0.
std::vector<double> encode(const AgentState& state);
void encode_into(const std::vector<double>& graph, const SpinConfig& current,
                 const SpinConfig& previous, std::span<double> out);

PolicyOutput forward(const NetParams& params, std::span<const double> features);

/// Activations kept for the reverse pass. Rows are samples.
struct ForwardCache {
  std::vector<RowMatrix> activations;  // [input, hidden_1, ..., hidden_L]
  RowMatrix logits;
  Eigen::VectorXd values;
};

ForwardCache forward_batch(const NetParams& params, const RowMatrix& inputs);

/// Adds d(loss)/d(params) to `grad` given d(loss)/d(logits) and
/// d(loss)/d(values) for every row of the cached batch.
void backward_batch(const NetParams& params, const ForwardCache& cache,
                    const RowMatrix& grad_logits, const Eigen::VectorXd& grad_values,
                    std::span<double> grad);

/// Ordered draws without replacement from successively masked softmaxes.
std::pair<ActionChoice, double> sample_action(const PolicyOutput& output, std::size_t m, Rng& rng);

/// Same factorization, argmax at each draw.
std::pair<ActionChoice, double> greedy_action(const PolicyOutput& output, std::size_t m);

double log_prob_of(const PolicyOutput& output, const ActionChoice& action);
double log_prob_of(std::span<const double> logits, const ActionChoice& action);

/// out += coeff * d log pi(action) / d logits.
void add_log_prob_grad(std::span<const double> logits, const ActionChoice& action, double coeff,
                       std::span<double> out);

/// Entropy of the first (unmasked) draw.
double first_draw_entropy(std::span<const double> logits);

/// out += coeff * dH / d logits.
void add_entropy_grad(std::span<const double> logits, double coeff, std::span<double> out);

/// Gradient of c_pg * log pi(action | s) + c_v * V(s) w.r.t. all parameters.
std::vector<double> backward(const NetParams& params, std::span<const double> features,
                             const ActionChoice& action, double c_pg, double c_v);

struct RmsPropHyper {
  double learning_rate = 5e-4;
  double decay = 0.99;
  double epsilon = 1e-5;
};

struct RmsPropState {
  std::vector<double> accumulator;
};

/// acc <- decay * acc + (1 - decay) g^2;  p <- p - lr * g / sqrt(acc + eps).
/// Throws TrainingError on a non-finite gradient entry.
void optimizer_step(NetParams& params, std::span<const double> grad, RmsPropState& state,
                    const RmsPropHyper& hyper);

/// A trained selector together with the (n, m) it was trained for.
struct Checkpoint {
  NetParams params;
  std::size_t n = 0;
  std::size_t m = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Policy closure over an immutable snapshot; safe to call concurrently.
Policy make_net_policy(std::shared_ptr<const NetParams> params, std::size_t m, bool greedy = false);

}  // namespace rlqls
