#pragma once

#include <cstddef>

#include "cardioseq/tensor.hpp"

namespace cardioseq {

/// Caps the number of threads used by the linear-algebra backend.
void set_compute_threads(std::size_t threads);

struct ConvSpec {
  Dims3 stride{1, 1, 1};
  Dims3 padding{0, 0, 0};
};

/// 3D cross-correlation with zero padding.
/// input [C_in, D, H, W], kernel [C_out, C_in, kd, kh, kw], bias [C_out] (optional).
template <typename T>
Tensor<T> conv(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, const ConvSpec& spec);
template <typename T>
Tensor<T> conv(const Tensor<T>& input, const Tensor<T>& kernel, const ConvSpec& spec);

/// Output extent of one convolution axis; throws ShapeError when the kernel
/// placements do not tile the padded input exactly.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

/// Block-wise maximum; ties route the gradient to the first cell in scan order.
template <typename T>
Tensor<T> max_pool(const Tensor<T>& input, const Dims3& factors);

/// Nearest-neighbour replication of every cell `factors` times per axis.
template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& input, const Dims3& factors);

// Binary operands must have identical shapes, or one of them must be a
// single-element tensor, which is broadcast.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

template <typename T>
Tensor<T> relu(const Tensor<T>& a);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T>
Tensor<T> tanh(const Tensor<T>& a);
template <typename T>
Tensor<T> neg(const Tensor<T>& a);
template <typename T>
Tensor<T> log(const Tensor<T>& a);

/// Stacks b's channels after a's. Every non-channel extent must agree.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Channels [begin, begin + count) of a [C, ...] tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& a, std::size_t begin, std::size_t count);

/// Per-voxel softmax across axis 0, max-subtracted.
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits);

/// Per-channel normalisation to zero mean and unit variance over the
/// spatial axes of a [C, ...] tensor.
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& a, T eps = T(1e-5));

template <typename T>
Tensor<T> sum(const Tensor<T>& a);
template <typename T>
Tensor<T> mean(const Tensor<T>& a);

}  // namespace cardioseq
