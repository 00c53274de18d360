#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "medoe/core/errors.hpp"

namespace medoe {

// Base coefficients and their DoE-driven boost multipliers.
struct BoostConfig {
  double base_temperature = 1.0;  // T_base
  double base_entropy = 1.6e-6;   // alpha_base
  double base_kl = 1.3e-4;        // kappa_base
  double base_clip = 2.5e-4;      // delta_base
  double temperature_boost = 3.0;  // B_T
  double entropy_boost = 40.0;     // B_alpha
  double kl_boost = 40.0;          // B_kappa
  double clip_boost = 400.0;       // B_delta

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("boost config: ") + name + " must be positive and finite");
    };
    positive(base_temperature, "base temperature");
    positive(base_clip, "base clip coefficient");
    if (!(base_entropy >= 0.0) || !std::isfinite(base_entropy)) throw ConfigError("boost config: base entropy coefficient must be >= 0");
    if (!(base_kl >= 0.0) || !std::isfinite(base_kl)) throw ConfigError("boost config: base KL coefficient must be >= 0");
    positive(temperature_boost, "temperature boost");
    positive(entropy_boost, "entropy boost");
    positive(kl_boost, "KL boost");
    positive(clip_boost, "clip boost");
  }

  // All multipliers equal to one: no modulation.
  static BoostConfig unboosted(double temperature, double entropy, double kl, double clip) {
    return {temperature, entropy, kl, clip, 1.0, 1.0, 1.0, 1.0};
  }
};

struct ModulatedCoefficients {
  double doe = 0.0;
  double temperature = 1.0;
  double entropy = 0.0;
  double kl = 0.0;
  double clip = 0.0;
};

// Non-experts (d -> 0) get hotter sampling, more entropy regularisation and a wider clip range;
// experts (d -> 1) get a stronger pull towards their behaviour prior.
inline ModulatedCoefficients compute_boosts(double doe, const BoostConfig& cfg) {
  if (!(doe >= 0.0 && doe <= 1.0)) throw std::invalid_argument("compute_boosts: DoE value must lie in [0,1]");
  const double non_expert = 1.0 - doe;
  ModulatedCoefficients c;
  c.doe = doe;
  c.temperature = cfg.base_temperature * std::pow(cfg.temperature_boost, non_expert);
  c.entropy = cfg.base_entropy * std::pow(cfg.entropy_boost, non_expert);
  c.clip = cfg.base_clip * std::pow(cfg.clip_boost, non_expert);
  c.kl = cfg.base_kl * std::pow(cfg.kl_boost, doe);
  return c;
}

inline double boosted_temperature(double doe, const BoostConfig& cfg) {
  if (!(doe >= 0.0 && doe <= 1.0)) throw std::invalid_argument("boosted_temperature: DoE value must lie in [0,1]");
  return cfg.base_temperature * std::pow(cfg.temperature_boost, 1.0 - doe);
}

}  // namespace medoe
