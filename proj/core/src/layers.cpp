#include "cardioseq/layers.hpp"

#include <cmath>
#include <random>

#include "cardioseq/hash.hpp"

namespace cardioseq {

namespace {

ConvSpec same_padding(const Dims3& k) {
  for (auto e : {k.d, k.h, k.w}) {
    if (e % 2 == 0) throw ShapeError("kernel extents must be odd, got " + to_string(k));
  }
  return {{1, 1, 1}, {(k.d - 1) / 2, (k.h - 1) / 2, (k.w - 1) / 2}};
}

}  // namespace

template <typename T>
void init_parameters(const ParameterList<T>& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& p : params) {
    auto t = p.tensor;
    auto data = t.mutable_data();
    switch (p.rule) {
      case InitRule::zeros: std::fill(data.begin(), data.end(), T(0)); break;
      case InitRule::ones: std::fill(data.begin(), data.end(), T(1)); break;
      case InitRule::uniform_fan_in: {
        const double fan_in = static_cast<double>(t.numel() / t.extent(0));
        const double bound = 1.0 / std::sqrt(fan_in);
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& v : data) v = static_cast<T>(dist(rng));
        break;
      }
    }
  }
}

template <typename T>
Conv3d<T>::Conv3d(std::size_t in_channels, std::size_t out_channels, Dims3 kernel, bool with_bias)
    : weight(Tensor<T>::zeros({out_channels, in_channels, kernel.d, kernel.h, kernel.w}, true)),
      spec(same_padding(kernel)) {
  if (with_bias) bias = Tensor<T>::zeros({out_channels}, true);
}

template <typename T>
Tensor<T> Conv3d<T>::forward(const Tensor<T>& x) const {
  return bias.defined() ? conv(x, weight, bias, spec) : conv(x, weight, spec);
}

template <typename T>
void Conv3d<T>::collect_parameters(const std::string& prefix, ParameterList<T>& out) const {
  out.push_back({prefix + ".weight", weight, InitRule::uniform_fan_in});
  if (bias.defined()) out.push_back({prefix + ".bias", bias, InitRule::zeros});
}

template <typename T>
ResidualBlock<T>::ResidualBlock(std::size_t in_channels, std::size_t out_channels, Dims3 kernel, bool instance_norm)
    : instance_norm_(instance_norm) {
  convs_.emplace_back(in_channels, out_channels, kernel);
  convs_.emplace_back(out_channels, out_channels, kernel);
  convs_.emplace_back(out_channels, out_channels, kernel);
  if (in_channels != out_channels) shortcut_.emplace(in_channels, out_channels, Dims3{1, 1, 1});
}

template <typename T>
Tensor<T> ResidualBlock<T>::forward(const Tensor<T>& x) const {
  if (x.rank() != 4 || x.extent(0) != in_channels()) {
    throw ShapeError("residual block expects " + std::to_string(in_channels()) + " input channels, got shape " +
                     to_string(x.shape()));
  }
  Tensor<T> h = x;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    h = convs_[i].forward(h);
    if (instance_norm_) h = instance_norm(h);
    if (i + 1 < convs_.size()) h = relu(h);
  }
  const Tensor<T> skip = shortcut_ ? shortcut_->forward(x) : x;
  return relu(add(h, skip));
}

template <typename T>
void ResidualBlock<T>::collect_parameters(const std::string& prefix, ParameterList<T>& out) const {
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].collect_parameters(prefix + ".conv" + std::to_string(i + 1), out);
  }
  if (shortcut_) shortcut_->collect_parameters(prefix + ".shortcut", out);
}

template <typename T>
ConvLSTMCell<T>::ConvLSTMCell(std::size_t input_channels, std::size_t hidden_channels, Dims3 kernel)
    : input_weight(Tensor<T>::zeros({4 * hidden_channels, input_channels, kernel.d, kernel.h, kernel.w}, true)),
      state_weight(Tensor<T>::zeros({4 * hidden_channels, hidden_channels, kernel.d, kernel.h, kernel.w}, true)),
      bias_input(Tensor<T>::zeros({hidden_channels}, true)),
      bias_forget(Tensor<T>::filled({hidden_channels}, T(1), true)),
      bias_output(Tensor<T>::zeros({hidden_channels}, true)),
      bias_candidate(Tensor<T>::zeros({hidden_channels}, true)),
      hidden_(hidden_channels),
      spec_(same_padding(kernel)) {}

template <typename T>
std::pair<Tensor<T>, ConvLSTMState<T>> ConvLSTMCell<T>::step(const Tensor<T>& x,
                                                             const ConvLSTMState<T>& state) const {
  if (x.rank() != 4 || x.extent(0) != input_channels()) {
    throw ShapeError("ConvLSTM cell expects " + std::to_string(input_channels()) + " input channels, got shape " +
                     to_string(x.shape()));
  }
  const Shape expected{hidden_, x.extent(1), x.extent(2), x.extent(3)};
  if (state.hidden.shape() != expected || state.cell.shape() != expected) {
    throw ShapeError("ConvLSTM state shapes " + to_string(state.hidden.shape()) + " / " +
                     to_string(state.cell.shape()) + " do not match input geometry " + to_string(expected));
  }
  const Tensor<T> bias = concat_channels(concat_channels(bias_input, bias_forget),
                                         concat_channels(bias_output, bias_candidate));
  const Tensor<T> gates = add(conv(x, input_weight, bias, spec_), conv(state.hidden, state_weight, spec_));
  const Tensor<T> i = sigmoid(slice_channels(gates, 0, hidden_));
  const Tensor<T> f = sigmoid(slice_channels(gates, hidden_, hidden_));
  const Tensor<T> o = sigmoid(slice_channels(gates, 2 * hidden_, hidden_));
  const Tensor<T> g = tanh(slice_channels(gates, 3 * hidden_, hidden_));
  ConvLSTMState<T> next;
  next.cell = add(mul(f, state.cell), mul(i, g));
  next.hidden = mul(o, tanh(next.cell));
  return {next.hidden, next};
}

template <typename T>
ConvLSTMState<T> ConvLSTMCell<T>::initial_state(const Dims3& spatial, T fill) const {
  const Shape shape{hidden_, spatial.d, spatial.h, spatial.w};
  return {Tensor<T>::filled(shape, fill), Tensor<T>::filled(shape, fill)};
}

template <typename T>
void ConvLSTMCell<T>::collect_parameters(const std::string& prefix, ParameterList<T>& out) const {
  out.push_back({prefix + ".input_weight", input_weight, InitRule::uniform_fan_in});
  out.push_back({prefix + ".state_weight", state_weight, InitRule::uniform_fan_in});
  out.push_back({prefix + ".bias_input", bias_input, InitRule::zeros});
  out.push_back({prefix + ".bias_forget", bias_forget, InitRule::ones});
  out.push_back({prefix + ".bias_output", bias_output, InitRule::zeros});
  out.push_back({prefix + ".bias_candidate", bias_candidate, InitRule::zeros});
}

template <typename T>
std::uint64_t parameter_digest(const ParameterList<T>& params) {
  Fnv1a h;
  for (const auto& p : params) {
    h.update(p.name);
    h.update(to_string(p.tensor.shape()));
    h.update_values(p.tensor.data());
  }
  return h.digest();
}

template std::uint64_t parameter_digest(const ParameterList<float>&);
template std::uint64_t parameter_digest(const ParameterList<double>&);
template void init_parameters(const ParameterList<float>&, std::uint64_t);
template void init_parameters(const ParameterList<double>&, std::uint64_t);

template class Conv3d<float>;
template class Conv3d<double>;
template class ResidualBlock<float>;
template class ResidualBlock<double>;
template class ConvLSTMCell<float>;
template class ConvLSTMCell<double>;

}  // namespace cardioseq
