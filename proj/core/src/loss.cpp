#include "cardioseq/loss.hpp"

#include <algorithm>
#include <cmath>

#include "cardioseq/model.hpp"
#include "cardioseq/ops.hpp"

namespace cardioseq {

std::string to_string(LossMode mode) {
  return mode == LossMode::cross_entropy ? "cross_entropy" : "cross_entropy_plus_soft_dice";
}

LossMode parse_loss_mode(std::string_view text) {
  if (text == "cross_entropy" || text == "ce") return LossMode::cross_entropy;
  if (text == "cross_entropy_plus_soft_dice" || text == "ce+dice") return LossMode::cross_entropy_plus_soft_dice;
  throw ConfigError("unknown loss mode '" + std::string(text) + "' (expected cross_entropy or "
                    "cross_entropy_plus_soft_dice)");
}

namespace {

void check_inputs(const Shape& shape, const LabelVolume& labels) {
  if (shape.size() != 4 || shape[0] != kNumClasses) {
    throw ShapeError("loss expects logits of shape [4, D, H, W], got " + to_string(shape));
  }
  const Dims3 spatial{shape[1], shape[2], shape[3]};
  if (!(spatial == labels.extents) || labels.data.size() != spatial.product()) {
    throw ShapeError("label extents " + to_string(labels.extents) + " do not match logits " + to_string(shape));
  }
  for (auto v : labels.data) {
    if (v >= kNumClasses) throw ValueError("label value " + std::to_string(v) + " outside 0..3");
  }
}

// Per-voxel softmax in class-major layout.
template <typename T>
std::vector<T> softmax(std::span<const T> z, std::size_t n) {
  std::vector<T> p(z.size());
  for (std::size_t i = 0; i < n; ++i) {
    T m = z[i];
    for (std::size_t c = 1; c < kNumClasses; ++c) m = std::max(m, z[c * n + i]);
    T s = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      p[c * n + i] = std::exp(z[c * n + i] - m);
      s += p[c * n + i];
    }
    for (std::size_t c = 0; c < kNumClasses; ++c) p[c * n + i] /= s;
  }
  return p;
}

}  // namespace

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const LabelVolume& labels) {
  check_inputs(logits.shape(), labels);
  const std::size_t n = labels.data.size();
  const auto z = logits.data();
  std::vector<T> probs = softmax<T>(z, n);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    T m = z[i];
    for (std::size_t c = 1; c < kNumClasses; ++c) m = std::max(m, z[c * n + i]);
    double s = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) s += std::exp(static_cast<double>(z[c * n + i] - m));
    total += std::log(s) + static_cast<double>(m) - static_cast<double>(z[labels.data[i] * n + i]);
  }
  const T value = static_cast<T>(total / static_cast<double>(n));
  return make_result<T>("cross_entropy", {1}, {value}, {logits},
                        [probs = std::move(probs), target = labels.data, n](detail::Node<T>& self) {
                          auto& in = *self.inputs[0];
                          if (!in.requires_grad) return;
                          auto g = in.grad_buffer();
                          const T scale = self.grad[0] / static_cast<T>(n);
                          for (std::size_t c = 0; c < kNumClasses; ++c) {
                            for (std::size_t i = 0; i < n; ++i) {
                              const T onehot = target[i] == c ? T(1) : T(0);
                              g[c * n + i] += scale * (probs[c * n + i] - onehot);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> soft_dice_loss(const Tensor<T>& logits, const LabelVolume& labels, T eps) {
  check_inputs(logits.shape(), labels);
  const std::size_t n = labels.data.size();
  std::vector<T> probs = softmax<T>(logits.data(), n);
  std::array<double, kNumClasses> inter{};
  std::array<double, kNumClasses> denom{};
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = probs[c * n + i];
      const double t = labels.data[i] == c ? 1.0 : 0.0;
      inter[c] += p * t;
      denom[c] += p + t;
    }
    denom[c] += static_cast<double>(eps);
  }
  double mean_dice = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) mean_dice += (2 * inter[c] + eps) / denom[c];
  mean_dice /= static_cast<double>(kNumClasses);
  const T value = static_cast<T>(1.0 - mean_dice);
  return make_result<T>(
      "soft_dice", {1}, {value}, {logits},
      [probs = std::move(probs), target = labels.data, inter, denom, n, eps](detail::Node<T>& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        auto g = in.grad_buffer();
        const double scale = -static_cast<double>(self.grad[0]) / static_cast<double>(kNumClasses);
        std::vector<double> dp(probs.size());
        for (std::size_t c = 0; c < kNumClasses; ++c) {
          const double num = 2 * inter[c] + static_cast<double>(eps);
          for (std::size_t i = 0; i < n; ++i) {
            const double t = target[i] == c ? 1.0 : 0.0;
            dp[c * n + i] = scale * (2 * t * denom[c] - num) / (denom[c] * denom[c]);
          }
        }
        for (std::size_t i = 0; i < n; ++i) {
          double dot = 0;
          for (std::size_t c = 0; c < kNumClasses; ++c) dot += probs[c * n + i] * dp[c * n + i];
          for (std::size_t c = 0; c < kNumClasses; ++c) {
            g[c * n + i] += static_cast<T>(probs[c * n + i] * (dp[c * n + i] - dot));
          }
        }
      });
}

template <typename T>
Tensor<T> segmentation_loss(const Tensor<T>& logits, const LabelVolume& labels, LossMode mode) {
  Tensor<T> loss = cross_entropy(logits, labels);
  if (mode == LossMode::cross_entropy_plus_soft_dice) loss = add(loss, soft_dice_loss(logits, labels));
  return loss;
}

#define CARDIOSEQ_INSTANTIATE(T)                                                       \
  template Tensor<T> cross_entropy(const Tensor<T>&, const LabelVolume&);              \
  template Tensor<T> soft_dice_loss(const Tensor<T>&, const LabelVolume&, T);          \
  template Tensor<T> segmentation_loss(const Tensor<T>&, const LabelVolume&, LossMode);

CARDIOSEQ_INSTANTIATE(float)
CARDIOSEQ_INSTANTIATE(double)

}  // namespace cardioseq
