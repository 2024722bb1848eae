#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cardioseq/ops.hpp"
#include "cardioseq/tensor.hpp"

namespace cardioseq {

/// How init_parameters fills a tensor.
enum class InitRule {
  uniform_fan_in,  ///< U(-1/sqrt(fan_in), 1/sqrt(fan_in)), fan_in = numel / extent(0)
  zeros,
  ones,
};

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
  InitRule rule = InitRule::uniform_fan_in;
};

template <typename T>
using ParameterList = std::vector<NamedParameter<T>>;

/// Deterministically re-draws every parameter in list order from `seed`.
template <typename T>
void init_parameters(const ParameterList<T>& params, std::uint64_t seed);

/// FNV-1a over names, shapes and value bytes, in list order.
template <typename T>
std::uint64_t parameter_digest(const ParameterList<T>& params);

/// Shape-preserving convolution (stride 1, pad (k-1)/2) with optional bias.
template <typename T>
class Conv3d {
 public:
  Conv3d(std::size_t in_channels, std::size_t out_channels, Dims3 kernel, bool with_bias = true);

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect_parameters(const std::string& prefix, ParameterList<T>& out) const;

  std::size_t in_channels() const { return weight.extent(1); }
  std::size_t out_channels() const { return weight.extent(0); }

  Tensor<T> weight;
  Tensor<T> bias;  // undefined when constructed without bias
  ConvSpec spec;
};

/// Three convolutions, each followed by optional instance normalisation
/// (ReLU after the first two), plus a shortcut path that is the identity
/// when channel counts match and a 1x1x1 convolution otherwise. The sum of
/// both paths goes through a final ReLU.
template <typename T>
class ResidualBlock {
 public:
  ResidualBlock(std::size_t in_channels, std::size_t out_channels, Dims3 kernel = {3, 3, 3},
                bool instance_norm = true);

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect_parameters(const std::string& prefix, ParameterList<T>& out) const;

  std::size_t in_channels() const { return convs_[0].in_channels(); }
  std::size_t out_channels() const { return convs_[0].out_channels(); }
  bool has_projection() const { return shortcut_.has_value(); }

  std::vector<Conv3d<T>>& convs() { return convs_; }

 private:
  std::vector<Conv3d<T>> convs_;
  std::optional<Conv3d<T>> shortcut_;
  bool instance_norm_;
};

template <typename T>
struct ConvLSTMState {
  Tensor<T> hidden;
  Tensor<T> cell;
};

/// Convolutional LSTM cell with gate order (input, forget, output, candidate):
///
///   i = sigmoid(W_xi * x + W_hi * h + b_i)     f, o likewise
///   g = tanh(W_xg * x + W_hg * h + b_g)
///   c' = f . c + i . g,   h' = o . tanh(c')
///
/// The cell's output is h'.
template <typename T>
class ConvLSTMCell {
 public:
  ConvLSTMCell(std::size_t input_channels, std::size_t hidden_channels, Dims3 kernel = {3, 3, 3});

  std::pair<Tensor<T>, ConvLSTMState<T>> step(const Tensor<T>& x, const ConvLSTMState<T>& state) const;

  /// State with hidden and cell filled with `fill` (1.0: no prior information).
  ConvLSTMState<T> initial_state(const Dims3& spatial, T fill = T(1)) const;

  void collect_parameters(const std::string& prefix, ParameterList<T>& out) const;

  std::size_t input_channels() const { return input_weight.extent(1); }
  std::size_t hidden_channels() const { return hidden_; }

  Tensor<T> input_weight;  // [4H, C_in, k...]
  Tensor<T> state_weight;  // [4H, H, k...]
  Tensor<T> bias_input;    // [H] each
  Tensor<T> bias_forget;
  Tensor<T> bias_output;
  Tensor<T> bias_candidate;

 private:
  std::size_t hidden_;
  ConvSpec spec_;
};

extern template class Conv3d<float>;
extern template class Conv3d<double>;
extern template class ResidualBlock<float>;
extern template class ResidualBlock<double>;
extern template class ConvLSTMCell<float>;
extern template class ConvLSTMCell<double>;

}  // namespace cardioseq
