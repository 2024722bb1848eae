#include "cardioseq/optimizer.hpp"

#include <cmath>

namespace cardioseq {

void AdamConfig::validate() const {
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(eps > 0)) throw ConfigError("Adam eps must be positive");
  if (!(clip_norm >= 0)) throw ConfigError("gradient clipping threshold must be non-negative");
}

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, AdamMoments<T>& moments, std::uint64_t step,
                 double lr, const AdamConfig& config, double grad_scale) {
  if (grad.size() != param.size()) {
    throw ShapeError("gradient has " + std::to_string(grad.size()) + " elements, parameter " +
                     std::to_string(param.size()));
  }
  if (step == 0) throw ValueError("Adam step counter starts at 1");
  if (moments.m.empty()) {
    moments.m.assign(param.size(), T(0));
    moments.v.assign(param.size(), T(0));
  }
  if (moments.m.size() != param.size() || moments.v.size() != param.size()) {
    throw ShapeError("optimizer state does not match parameter size " + std::to_string(param.size()));
  }
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = static_cast<double>(grad[i]) * grad_scale;
    const double m = config.beta1 * moments.m[i] + (1.0 - config.beta1) * g;
    const double v = config.beta2 * moments.v[i] + (1.0 - config.beta2) * g * g;
    moments.m[i] = static_cast<T>(m);
    moments.v[i] = static_cast<T>(v);
    param[i] = static_cast<T>(param[i] - lr * (m / c1) / (std::sqrt(v / c2) + config.eps));
  }
}

template <typename T>
Adam<T>::Adam(AdamConfig config) : config_(config) {
  config_.validate();
}

template <typename T>
void Adam<T>::step(const ParameterList<T>& params, double lr) {
  if (!(lr > 0)) throw ConfigError("learning rate must be positive");
  ++steps_;
  double scale = 1.0;
  if (config_.clip_norm > 0) {
    double sq = 0;
    for (const auto& p : params) {
      for (T g : p.tensor.grad()) sq += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > config_.clip_norm) scale = config_.clip_norm / norm;
  }
  for (const auto& p : params) {
    auto t = p.tensor;
    adam_update<T>(t.mutable_data(), t.grad(), moments_[p.name], steps_, lr, config_, scale);
  }
}

template <typename T>
void zero_grads(const ParameterList<T>& params) {
  for (const auto& p : params) {
    auto t = p.tensor;
    t.zero_grad();
  }
}

template void adam_update(std::span<float>, std::span<const float>, AdamMoments<float>&, std::uint64_t, double,
                          const AdamConfig&, double);
template void adam_update(std::span<double>, std::span<const double>, AdamMoments<double>&, std::uint64_t, double,
                          const AdamConfig&, double);
template void zero_grads(const ParameterList<float>&);
template void zero_grads(const ParameterList<double>&);
template class Adam<float>;
template class Adam<double>;

}  // namespace cardioseq
