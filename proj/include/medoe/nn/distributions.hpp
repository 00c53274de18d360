#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "medoe/core/errors.hpp"

namespace medoe {

// softmax(logits / temperature), computed in log space for stability.
inline void softmax_into(std::span<const double> logits, double temperature, std::span<double> out) {
  if (!(temperature > 0.0)) throw std::invalid_argument("softmax: temperature must be positive");
  double mx = -INFINITY;
  for (double z : logits) {
    if (!std::isfinite(z)) throw NumericError("softmax: non-finite logit");
    mx = std::max(mx, z);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - mx) / temperature);
    total += out[i];
  }
  for (double& p : out.first(logits.size())) p /= total;
}

inline std::vector<double> policy_distribution(std::span<const double> logits, double temperature) {
  std::vector<double> p(logits.size());
  softmax_into(logits, temperature, p);
  return p;
}

inline double log_softmax_at(std::span<const double> logits, double temperature, std::size_t index) {
  if (!(temperature > 0.0)) throw std::invalid_argument("softmax: temperature must be positive");
  double mx = -INFINITY;
  for (double z : logits) {
    if (!std::isfinite(z)) throw NumericError("softmax: non-finite logit");
    mx = std::max(mx, z);
  }
  double total = 0.0;
  for (double z : logits) total += std::exp((z - mx) / temperature);
  return (logits[index] - mx) / temperature - std::log(total);
}

// Shannon entropy in nats, with 0 ln 0 = 0.
inline double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

// KL(p || q) in nats. q must cover the support of p.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (!(q[i] > 0.0)) throw NumericError("kl_divergence: q has no mass where p does");
    kl += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return kl;
}

}  // namespace medoe
