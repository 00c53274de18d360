#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "medoe/core/task.hpp"
#include "medoe/nn/approximator.hpp"

namespace medoe {

inline constexpr double kProbabilityClamp = 1e-7;

inline double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

inline double clamp_probability(double p) { return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp); }

// Maps an agent's observation to the probability that it lies in that agent's domain of expertise.
// Three flavours: a constant, the environment's hand-written rule, or a learned network whose single
// output is a logit.
class DoEClassifier {
 public:
  enum class Kind { constant, expert, learned };

  static DoEClassifier constant(double value) {
    if (!(value >= 0.0 && value <= 1.0)) throw std::invalid_argument("constant classifier value must lie in [0,1]");
    DoEClassifier c;
    c.kind_ = Kind::constant;
    c.value_ = value;
    return c;
  }
  static DoEClassifier expert() {
    DoEClassifier c;
    c.kind_ = Kind::expert;
    return c;
  }
  static DoEClassifier learned(FunctionApproximator net) {
    if (net.output_dim() != 1) throw ConfigError("learned classifier must have a single output");
    DoEClassifier c;
    c.kind_ = Kind::learned;
    c.net_ = std::move(net);
    return c;
  }

  Kind kind() const { return kind_; }
  const FunctionApproximator& network() const { return *net_; }

  // Learned output, clamped away from 0 and 1.
  double probability(const Observation& obs) const {
    switch (kind_) {
      case Kind::constant: return value_;
      case Kind::learned: {
        if (net_->kind() == ApproxKind::mlp && static_cast<int>(obs.features.size()) != net_->input_dim())
          throw ConfigError("classifier/observation dimension mismatch");
        return clamp_probability(sigmoid(net_->forward_one(obs)[0]));
      }
      case Kind::expert: break;
    }
    throw std::logic_error("expert classifier needs the environment state");
  }

  template <Environment E>
  double evaluate(const E& env, const typename E::State& state, int agent, const Observation& obs) const {
    if (kind_ == Kind::expert) return env.expert_doe(state, agent);
    return probability(obs);
  }

  // Batched logits for the learned flavour.
  Vector learned_probabilities(const InputBatch& in) const {
    if (kind_ != Kind::learned) throw std::logic_error("not a learned classifier");
    Matrix z = net_->forward(in);
    Vector p(z.cols());
    for (Eigen::Index i = 0; i < z.cols(); ++i) p[i] = clamp_probability(sigmoid(z(0, i)));
    return p;
  }

 private:
  Kind kind_ = Kind::constant;
  double value_ = 1.0;
  std::optional<FunctionApproximator> net_;
};

}  // namespace medoe
