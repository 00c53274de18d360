#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "medoe/core/errors.hpp"
#include "medoe/core/rng.hpp"
#include "medoe/core/task.hpp"

namespace medoe {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// A batch of approximator inputs, one column per sample.
struct InputBatch {
  Matrix features;             // input_dim x batch
  std::vector<int> state_ids;  // batch

  int size() const { return static_cast<int>(state_ids.size()); }

  static InputBatch from(std::span<const Observation> obs) {
    InputBatch b;
    if (obs.empty()) return b;
    b.features.resize(static_cast<Eigen::Index>(obs.front().features.size()), static_cast<Eigen::Index>(obs.size()));
    b.state_ids.resize(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) {
      for (std::size_t k = 0; k < obs[i].features.size(); ++k)
        b.features(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = obs[i].features[k];
      b.state_ids[i] = obs[i].state_id;
    }
    return b;
  }
};

enum class ApproxKind { tabular, mlp };

inline const char* to_string(ApproxKind k) { return k == ApproxKind::tabular ? "tabular" : "mlp"; }

// Tabular or fully-connected ReLU network with a linear output layer. Parameters live in one flat
// vector so optimizers and checkpoints treat both kinds the same way.
class FunctionApproximator {
 public:
  // Intermediate activations kept from a forward pass for backpropagation (MLP only).
  struct Cache {
    std::vector<Matrix> activations;  // activations[0] = input, then post-ReLU hidden layers
  };

  FunctionApproximator() = default;

  static FunctionApproximator tabular(int num_states, int output_dim, double init_value = 0.0) {
    if (num_states <= 0 || output_dim <= 0) throw std::invalid_argument("tabular: sizes must be positive");
    FunctionApproximator f;
    f.kind_ = ApproxKind::tabular;
    f.num_states_ = num_states;
    f.input_dim_ = num_states;
    f.output_dim_ = output_dim;
    f.params_ = Vector::Constant(static_cast<Eigen::Index>(num_states) * output_dim, init_value);
    return f;
  }

  // Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases. `zero_output_layer` zeroes the
  // last layer's weights as well.
  static FunctionApproximator mlp(int input_dim, std::vector<int> hidden, int output_dim, RngStream& rng,
                                  bool zero_output_layer = false) {
    if (input_dim <= 0 || output_dim <= 0) throw std::invalid_argument("mlp: sizes must be positive");
    FunctionApproximator f;
    f.kind_ = ApproxKind::mlp;
    f.input_dim_ = input_dim;
    f.output_dim_ = output_dim;
    f.hidden_ = std::move(hidden);
    f.build_layout();
    f.params_ = Vector::Zero(f.total_params_);
    for (std::size_t l = 0; l < f.layers_.size(); ++l) {
      const auto& L = f.layers_[l];
      const bool last = l + 1 == f.layers_.size();
      if (last && zero_output_layer) continue;
      const double bound = 1.0 / std::sqrt(static_cast<double>(L.in));
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(L.in) * L.out; ++i)
        f.params_[L.w_offset + i] = rng.uniform(-bound, bound);
    }
    return f;
  }

  ApproxKind kind() const { return kind_; }
  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  int num_states() const { return num_states_; }
  const std::vector<int>& hidden() const { return hidden_; }

  const Vector& params() const { return params_; }
  Vector& params() { return params_; }
  Eigen::Index param_count() const { return params_.size(); }

  // Outputs for a batch (output_dim x batch). Fills `cache` when given.
  Matrix forward(const InputBatch& in, Cache* cache = nullptr) const {
    const int B = in.size();
    if (kind_ == ApproxKind::tabular) {
      Matrix out(output_dim_, B);
      for (int b = 0; b < B; ++b) out.col(b) = table_row(checked_state(in.state_ids[static_cast<std::size_t>(b)]));
      return out;
    }
    if (in.features.rows() != input_dim_)
      throw ConfigError("mlp: input dimension " + std::to_string(in.features.rows()) + " != " +
                        std::to_string(input_dim_));
    Matrix h = in.features;
    if (cache) {
      cache->activations.clear();
      cache->activations.push_back(h);
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix z = weight(l) * h;
      z.colwise() += bias(l);
      if (l + 1 < layers_.size()) {
        h = z.cwiseMax(0.0);
        if (cache) cache->activations.push_back(h);
      } else {
        h = std::move(z);
      }
    }
    return h;
  }

  Vector forward_one(const Observation& obs) const {
    if (kind_ == ApproxKind::tabular) return table_row(checked_state(obs.state_id));
    InputBatch b = InputBatch::from(std::span<const Observation>(&obs, 1));
    return forward(b).col(0);
  }

  // Gradient of sum_b <grad_out[:,b], f(x_b)> with respect to the flat parameters.
  Vector backward(const InputBatch& in, const Cache& cache, const Matrix& grad_out) const {
    Vector g = Vector::Zero(params_.size());
    if (kind_ == ApproxKind::tabular) {
      for (int b = 0; b < in.size(); ++b) {
        const int s = checked_state(in.state_ids[static_cast<std::size_t>(b)]);
        g.segment(static_cast<Eigen::Index>(s) * output_dim_, output_dim_) += grad_out.col(b);
      }
      return g;
    }
    Matrix delta = grad_out;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const Matrix& a_prev = cache.activations[l];
      const auto& L = layers_[l];
      Eigen::Map<Matrix> gw(g.data() + L.w_offset, L.out, L.in);
      gw.noalias() = delta * a_prev.transpose();
      g.segment(L.b_offset, L.out) = delta.rowwise().sum();
      if (l > 0) {
        Matrix back = weight(l).transpose() * delta;
        delta = back.cwiseProduct((a_prev.array() > 0.0).cast<double>().matrix());
      }
    }
    return g;
  }

  bool all_finite() const { return params_.allFinite(); }

  // Named views used by checkpoints.
  struct NamedArray {
    std::string name;
    std::vector<std::size_t> shape;
    Eigen::Index offset;
    Eigen::Index count;
  };

  std::vector<NamedArray> named_arrays() const {
    std::vector<NamedArray> out;
    if (kind_ == ApproxKind::tabular) {
      out.push_back({"table", {static_cast<std::size_t>(num_states_), static_cast<std::size_t>(output_dim_)}, 0,
                     params_.size()});
      return out;
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& L = layers_[l];
      out.push_back({"layer" + std::to_string(l) + ".weight",
                     {static_cast<std::size_t>(L.out), static_cast<std::size_t>(L.in)}, L.w_offset,
                     static_cast<Eigen::Index>(L.out) * L.in});
      out.push_back({"layer" + std::to_string(l) + ".bias", {static_cast<std::size_t>(L.out)}, L.b_offset, L.out});
    }
    return out;
  }

  // Rebuilds an empty approximator with the given architecture (parameters zeroed).
  static FunctionApproximator with_architecture(ApproxKind kind, int input_dim, std::vector<int> hidden,
                                                int output_dim, int num_states) {
    if (kind == ApproxKind::tabular) return tabular(num_states, output_dim);
    FunctionApproximator f;
    f.kind_ = ApproxKind::mlp;
    f.input_dim_ = input_dim;
    f.output_dim_ = output_dim;
    f.hidden_ = std::move(hidden);
    f.build_layout();
    f.params_ = Vector::Zero(f.total_params_);
    return f;
  }

  bool same_architecture(const FunctionApproximator& o) const {
    return kind_ == o.kind_ && input_dim_ == o.input_dim_ && output_dim_ == o.output_dim_ &&
           hidden_ == o.hidden_ && num_states_ == o.num_states_;
  }

 private:
  struct Layer {
    int in = 0, out = 0;
    Eigen::Index w_offset = 0, b_offset = 0;
  };

  void build_layout() {
    layers_.clear();
    std::vector<int> sizes;
    sizes.push_back(input_dim_);
    for (int h : hidden_) {
      if (h <= 0) throw std::invalid_argument("mlp: hidden sizes must be positive");
      sizes.push_back(h);
    }
    sizes.push_back(output_dim_);
    Eigen::Index off = 0;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      Layer L;
      L.in = sizes[i];
      L.out = sizes[i + 1];
      L.w_offset = off;
      off += static_cast<Eigen::Index>(L.in) * L.out;
      L.b_offset = off;
      off += L.out;
      layers_.push_back(L);
    }
    total_params_ = off;
  }

  int checked_state(int s) const {
    if (s < 0 || s >= num_states_) throw std::out_of_range("tabular: state id out of range");
    return s;
  }

  Eigen::Map<const Vector> table_row(int s) const {
    return Eigen::Map<const Vector>(params_.data() + static_cast<Eigen::Index>(s) * output_dim_, output_dim_);
  }

  Eigen::Map<const Matrix> weight(std::size_t l) const {
    const auto& L = layers_[l];
    return Eigen::Map<const Matrix>(params_.data() + L.w_offset, L.out, L.in);
  }
  Eigen::Map<const Vector> bias(std::size_t l) const {
    const auto& L = layers_[l];
    return Eigen::Map<const Vector>(params_.data() + L.b_offset, L.out);
  }

  ApproxKind kind_ = ApproxKind::tabular;
  int input_dim_ = 0;
  int output_dim_ = 0;
  int num_states_ = 0;
  std::vector<int> hidden_;
  std::vector<Layer> layers_;
  Eigen::Index total_params_ = 0;
  Vector params_;
};

using PolicyParams = FunctionApproximator;
using CriticParams = FunctionApproximator;

// Frozen copy of a source-stage policy. Exposes read-only access only.
class BehaviourPrior {
 public:
  BehaviourPrior() = default;
  explicit BehaviourPrior(FunctionApproximator policy) : policy_(std::move(policy)) {}
  const FunctionApproximator& policy() const { return policy_; }

 private:
  FunctionApproximator policy_;
};

}  // namespace medoe
