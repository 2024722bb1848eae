#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cardioseq/layers.hpp"
#include "cardioseq/volume.hpp"

namespace cardioseq {

inline constexpr std::size_t kNumClasses = 4;  // background, LV, RV, MYO

/// Which recurrent decoders exist. `none` is the plain residual U-Net whose
/// class logits come from the encoder head.
enum class DecoderMode { none, forward_only, bidirectional };

/// How the two directional decoders are combined.
enum class FusionMode { average, learned };

enum class Direction { forward, backward };

std::string to_string(DecoderMode mode);
std::string to_string(FusionMode mode);
DecoderMode parse_decoder_mode(std::string_view text);
FusionMode parse_fusion_mode(std::string_view text);

/// Encoder/decoder hierarchy. Channel lists run from the finest level to the
/// coarsest; `pooling` lists the K-1 downsampling factors in the same order.
struct ModelConfig {
  std::size_t levels = 4;
  std::vector<std::size_t> channels{8, 16, 32, 64};
  /// ConvLSTM hidden channels per level; empty means "same as channels".
  std::vector<std::size_t> decoder_channels;
  /// Empty selects the automatic rule: (1,2,2) while the level's depth is
  /// below 8, (2,2,2) otherwise.
  std::vector<Dims3> pooling;
  Dims3 kernel{3, 3, 3};
  DecoderMode decoder = DecoderMode::bidirectional;
  FusionMode fusion = FusionMode::average;
  bool instance_norm = true;

  void validate() const;
  std::vector<std::size_t> hidden_channels() const;

  /// Canonical `key=value` lines; parse(serialize()) round-trips.
  std::string serialize() const;
  static ModelConfig parse(std::string_view text);
  std::uint64_t digest() const;
};

/// Per-transition pooling factors for an input of the given extents. Throws
/// ShapeError naming the cumulative divisors when the extents do not divide.
std::vector<Dims3> resolve_pooling(const ModelConfig& config, const Dims3& input);

/// Encoder output for one frame. `g` runs from the coarsest level (index 0)
/// to the finest; `logits_head` holds 4-class logits at input resolution.
template <typename T>
struct EncoderFeatures {
  std::vector<Tensor<T>> g;
  Tensor<T> logits_head;
};

/// Per-frame [4, D, H, W] logits in ascending frame order.
template <typename T>
using SequenceLogits = std::vector<Tensor<T>>;

/// Residual U-Net: a residual block per level on the contracting path and
/// on the expansive path, with upsample+conv fused into skips by addition.
template <typename T>
class Encoder {
 public:
  explicit Encoder(const ModelConfig& config);

  EncoderFeatures<T> encode(const Tensor<T>& frame, const std::vector<Dims3>& pooling) const;
  void collect_parameters(const std::string& prefix, ParameterList<T>& out) const;

 private:
  std::vector<ResidualBlock<T>> down_;
  std::vector<Conv3d<T>> up_conv_;
  std::vector<ResidualBlock<T>> up_;
  Conv3d<T> head_;
};

/// One hierarchical ConvLSTM stack. Per frame, level k (coarse to fine)
/// consumes [g_k | upsample(y_{k-1})] and its own state from the previously
/// visited frame; the finest output maps to class logits by a 1x1x1 conv.
template <typename T>
class DecoderStack {
 public:
  using States = std::vector<ConvLSTMState<T>>;

  explicit DecoderStack(const ModelConfig& config);

  States initial_states(const EncoderFeatures<T>& features) const;

  struct Step {
    Tensor<T> logits;
    States states;
  };
  Step step(const EncoderFeatures<T>& features, const States& previous) const;

  /// Visits frames in `direction` order; returns logits in ascending order.
  /// When `states_after` is given, it receives the states produced at each
  /// frame (indexed by frame).
  SequenceLogits<T> run(std::span<const EncoderFeatures<T>> features, Direction direction,
                        std::vector<States>* states_after = nullptr) const;

  void collect_parameters(const std::string& prefix, ParameterList<T>& out) const;
  const std::vector<ConvLSTMCell<T>>& cells() const { return cells_; }

 private:
  std::vector<ConvLSTMCell<T>> cells_;
  Conv3d<T> head_;
};

/// Per-frame logit average. Inputs must have equal length and shapes, with
/// `bwd` already in ascending frame order.
template <typename T>
SequenceLogits<T> fuse_bidirectional(const SequenceLogits<T>& fwd, const SequenceLogits<T>& bwd);

/// Encoder plus zero, one, or two directional decoders.
template <typename T>
class SegNet {
 public:
  explicit SegNet(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  /// frame: [1, D, H, W].
  EncoderFeatures<T> encode(const Tensor<T>& frame) const;
  std::vector<EncoderFeatures<T>> encode_sequence(std::span<const Tensor<T>> frames) const;

  SequenceLogits<T> decode_directional(std::span<const EncoderFeatures<T>> features, Direction direction) const;
  SequenceLogits<T> fuse(const SequenceLogits<T>& fwd, const SequenceLogits<T>& bwd) const;

  /// Final per-frame logits for the configured decoder mode.
  SequenceLogits<T> forward(std::span<const Tensor<T>> frames) const;
  SequenceLogits<T> forward_features(std::span<const EncoderFeatures<T>> features) const;

  ParameterList<T> parameters() const;
  ParameterList<T> encoder_parameters() const;
  ParameterList<T> decoder_parameters() const;
  void init_parameters(std::uint64_t seed) const;

  const DecoderStack<T>* decoder(Direction direction) const;
  /// Exchanges the forward and backward ConvLSTM stacks.
  void swap_directional_decoders();

  /// Number of decode_directional calls served by each stack.
  std::size_t decoder_evaluations(Direction direction) const;

 private:
  ModelConfig config_;
  Encoder<T> encoder_;
  std::optional<DecoderStack<T>> forward_decoder_;
  std::optional<DecoderStack<T>> backward_decoder_;
  std::optional<Conv3d<T>> fusion_;
  std::shared_ptr<std::array<std::atomic<std::size_t>, 2>> evaluations_;
};

/// Per-voxel argmax over the class axis; ties go to the lowest class index.
template <typename T>
LabelVolume argmax_labels(const Tensor<T>& logits);

/// Frame volume as a [1, D, H, W] tensor.
template <typename T>
Tensor<T> frame_tensor(const Volume& volume);

/// Label volume per frame of the sequence.
template <typename T>
std::vector<LabelVolume> segment_sequence(const SequenceSample& sample, const SegNet<T>& model);

extern template class Encoder<float>;
extern template class Encoder<double>;
extern template class DecoderStack<float>;
extern template class DecoderStack<double>;
extern template class SegNet<float>;
extern template class SegNet<double>;

}  // namespace cardioseq
