#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "medoe/core/errors.hpp"
#include "medoe/core/rng.hpp"
#include "medoe/core/task.hpp"
#include "medoe/doe/classifier.hpp"
#include "medoe/nn/adam.hpp"
#include "medoe/nn/approximator.hpp"

namespace medoe {

struct LabelledObservation {
  Observation obs;
  double label = 0.0;  // 1 = from the owner's source task, 0 = from another source task
};

struct DoEDataset {
  std::vector<LabelledObservation> train;
  std::vector<LabelledObservation> test;

  std::size_t size() const { return train.size() + test.size(); }
  int input_dim() const { return train.empty() ? 0 : static_cast<int>(train.front().obs.features.size()); }
};

struct ClassifierTrainingConfig {
  int hidden_units = 128;
  double learning_rate = 1e-2;
  double adam_epsilon = 1e-8;
  int batch_size = 512;
  int epochs = 1;
  double test_fraction = 0.1;
  bool zero_output_layer = false;
};

// Positives from the owner's buffer, negatives from every buffer of agents trained in another source
// task. Negatives are subsampled without replacement down to the number of positives.
inline DoEDataset build_dataset(std::span<const Observation> own, std::span<const std::vector<Observation>> others,
                                RngStream& rng, double test_fraction = 0.1) {
  if (own.empty()) throw ConfigError("build_dataset: own buffer is empty");
  std::vector<const Observation*> negatives;
  for (const auto& buf : others)
    for (const auto& o : buf) negatives.push_back(&o);
  if (negatives.empty()) throw ConfigError("build_dataset: no negative examples");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("build_dataset: test fraction must lie in (0,1)");
  const std::size_t dim = own.front().features.size();
  for (const auto& o : own)
    if (o.features.size() != dim) throw ConfigError("build_dataset: observation dimension mismatch");
  for (const auto* o : negatives)
    if (o->features.size() != dim) throw ConfigError("build_dataset: observation dimension mismatch");

  if (negatives.size() > own.size()) {
    shuffle(negatives, rng);
    negatives.resize(own.size());
  }
  std::vector<LabelledObservation> all;
  all.reserve(own.size() + negatives.size());
  for (const auto& o : own) all.push_back({o, 1.0});
  for (const auto* o : negatives) all.push_back({*o, 0.0});
  shuffle(all, rng);

  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(all.size())));
  DoEDataset ds;
  ds.test.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_test));
  ds.train.assign(all.begin() + static_cast<std::ptrdiff_t>(n_test), all.end());
  return ds;
}

// Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7].
inline double binary_cross_entropy(std::span<const double> probabilities, std::span<const double> labels) {
  if (probabilities.size() != labels.size() || probabilities.empty())
    throw std::invalid_argument("binary_cross_entropy: sizes must match and be non-zero");
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = clamp_probability(probabilities[i]);
    sum -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
  }
  return sum / static_cast<double>(labels.size());
}

inline double classifier_bce(const DoEClassifier& c, std::span<const LabelledObservation> data) {
  std::vector<double> p, y;
  p.reserve(data.size());
  y.reserve(data.size());
  for (const auto& ex : data) {
    p.push_back(c.probability(ex.obs));
    y.push_back(ex.label);
  }
  return binary_cross_entropy(p, y);
}

struct TrainedClassifier {
  DoEClassifier classifier;
  double test_bce = 0.0;
  double final_train_bce = 0.0;  // on the last minibatch
};

// Minibatch Adam on the BCE of a single-hidden-layer ReLU network with a sigmoid output.
inline TrainedClassifier train_classifier(const DoEDataset& ds, RngStream& rng,
                                          const ClassifierTrainingConfig& cfg = {}) {
  if (ds.train.empty() || ds.test.empty()) throw ConfigError("train_classifier: dataset has an empty split");
  if (cfg.batch_size <= 0 || cfg.epochs < 0 || cfg.hidden_units <= 0)
    throw ConfigError("train_classifier: invalid training configuration");
  FunctionApproximator net =
      FunctionApproximator::mlp(ds.input_dim(), {cfg.hidden_units}, 1, rng, cfg.zero_output_layer);
  AdamState adam(net.param_count(), cfg.learning_rate, cfg.adam_epsilon);

  std::vector<std::size_t> order(ds.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  TrainedClassifier out;
  std::vector<Observation> obs;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      obs.clear();
      for (std::size_t k = start; k < end; ++k) obs.push_back(ds.train[order[k]].obs);
      const InputBatch in = InputBatch::from(obs);
      FunctionApproximator::Cache cache;
      const Matrix z = net.forward(in, &cache);
      const auto B = static_cast<double>(end - start);
      Matrix grad(1, z.cols());
      double loss = 0.0;
      for (Eigen::Index b = 0; b < z.cols(); ++b) {
        const double y = ds.train[order[start + static_cast<std::size_t>(b)]].label;
        const double p = sigmoid(z(0, b));
        grad(0, b) = (p - y) / B;
        const double pc = clamp_probability(p);
        loss -= (y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc)) / B;
      }
      adam_step(net, net.backward(in, cache, grad), adam);
      out.final_train_bce = loss;
    }
  }
  if (!net.all_finite()) throw NumericError("train_classifier: non-finite parameters");
  out.classifier = DoEClassifier::learned(std::move(net));
  out.test_bce = classifier_bce(out.classifier, ds.test);
  return out;
}

// BCE of the classifier's outputs against the expert rule on a set of (state, observation) pairs.
template <Environment E>
double evaluate_against_expert(const DoEClassifier& c, const E& env, int agent,
                               std::span<const typename E::State> states) {
  if (states.empty()) throw std::invalid_argument("evaluate_against_expert: empty observation set");
  std::vector<double> p, y;
  for (const auto& s : states) {
    p.push_back(c.probability(env.observe(s, agent)));
    y.push_back(env.expert_doe(s, agent));
  }
  return binary_cross_entropy(p, y);
}

}  // namespace medoe
