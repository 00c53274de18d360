#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "medoe/nn/approximator.hpp"

namespace medoe {

struct AdamState {
  Vector m;
  Vector v;
  std::int64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-5;

  AdamState() = default;
  AdamState(Eigen::Index size, double lr, double eps = 1e-5)
      : m(Vector::Zero(size)), v(Vector::Zero(size)), learning_rate(lr), epsilon(eps) {}
};

// Bias-corrected Adam: p -= lr * m_hat / (sqrt(v_hat) + eps).
inline void adam_step(Vector& params, const Vector& grads, AdamState& st) {
  if (grads.size() != params.size() || st.m.size() != params.size() || st.v.size() != params.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  st.step += 1;
  const double t = static_cast<double>(st.step);
  const double c1 = 1.0 - std::pow(st.beta1, t);
  const double c2 = 1.0 - std::pow(st.beta2, t);
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
    const double m_hat = st.m[i] / c1;
    const double v_hat = st.v[i] / c2;
    params[i] -= st.learning_rate * m_hat / (std::sqrt(v_hat) + st.epsilon);
  }
}

inline void adam_step(FunctionApproximator& f, const Vector& grads, AdamState& st) {
  adam_step(f.params(), grads, st);
}

}  // namespace medoe
