#pragma once

#include <string>
#include <string_view>

#include "cardioseq/tensor.hpp"
#include "cardioseq/volume.hpp"

namespace cardioseq {

enum class LossMode { cross_entropy, cross_entropy_plus_soft_dice };

std::string to_string(LossMode mode);
LossMode parse_loss_mode(std::string_view text);

/// Mean over voxels of -log softmax(logits)[label]. logits: [4, D, H, W].
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const LabelVolume& labels);

/// 1 - mean over the four classes of (2 sum(p t) + eps) / (sum(p) + sum(t) + eps),
/// with p the softmax probabilities and t the one-hot labels.
template <typename T>
Tensor<T> soft_dice_loss(const Tensor<T>& logits, const LabelVolume& labels, T eps = T(1e-6));

template <typename T>
Tensor<T> segmentation_loss(const Tensor<T>& logits, const LabelVolume& labels, LossMode mode);

}  // namespace cardioseq
