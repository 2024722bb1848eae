#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cardioseq/layers.hpp"

namespace cardioseq {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clipping threshold; 0 disables clipping.
  double clip_norm = 0.0;

  void validate() const;
};

template <typename T>
struct AdamMoments {
  std::vector<T> m;
  std::vector<T> v;
};

/// One bias-corrected Adam update of `param` at step `step` (1-based).
/// Gradients are multiplied by `grad_scale` first.
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, AdamMoments<T>& moments, std::uint64_t step,
                 double lr, const AdamConfig& config, double grad_scale = 1.0);

/// Adam with state keyed by parameter name.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {});

  /// Advances the step counter and updates every parameter from its
  /// accumulated gradient (zero when none was accumulated).
  void step(const ParameterList<T>& params, double lr);

  std::uint64_t steps() const { return steps_; }
  void set_steps(std::uint64_t steps) { steps_ = steps; }
  const AdamConfig& config() const { return config_; }
  std::map<std::string, AdamMoments<T>>& moments() { return moments_; }
  const std::map<std::string, AdamMoments<T>>& moments() const { return moments_; }

 private:
  AdamConfig config_;
  std::uint64_t steps_ = 0;
  std::map<std::string, AdamMoments<T>> moments_;
};

/// Clears accumulated gradients of every parameter.
template <typename T>
void zero_grads(const ParameterList<T>& params);

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace cardioseq
