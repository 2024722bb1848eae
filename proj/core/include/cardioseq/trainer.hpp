#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cardioseq/loss.hpp"
#include "cardioseq/model.hpp"
#include "cardioseq/optimizer.hpp"
#include "cardioseq/volume.hpp"

namespace cardioseq {

struct TrainConfig {
  std::size_t stage1_epochs = 10;
  double stage1_lr = 1e-4;
  std::size_t stage2_epochs = 10;
  double stage2_lr = 1e-4;
  double lr_decay = 0.7;
  LossMode loss = LossMode::cross_entropy;
  AdamConfig adam;
  /// Sequence-coherent augmentation of every training iteration.
  bool augment = true;
  /// Visit sequences in a seeded random order each epoch.
  bool shuffle = true;
  std::uint64_t seed = 0;

  void validate() const;
  /// stage2_lr * lr_decay^epoch.
  double stage2_lr_at(std::size_t epoch) const;
};

/// One optimizer step on one sequence.
struct LogRecord {
  int stage = 1;
  std::size_t epoch = 0;
  std::size_t iter = 0;
  double lr = 0;
  double loss = 0;
  std::string patient;
  /// Number of frames contributing to the loss.
  std::size_t frames = 0;
  /// Sequences in the batch; always 1.
  std::size_t batch = 1;
};

using TrainingLog = std::vector<LogRecord>;
using LogSink = std::function<void(const LogRecord&)>;

std::string to_json(const LogRecord& record);
void write_log_jsonl(const TrainingLog& log, std::ostream& out);
/// Parses the records written by write_log_jsonl.
TrainingLog read_log_jsonl(std::istream& in);

/// Encoder-only training against the encoder's logits head. Each iteration
/// takes one sequence, accumulates the gradient of every labelled frame's
/// loss and takes one optimizer step on the encoder parameters. Decoder and
/// fusion parameters are not touched.
TrainingLog train_stage1(const SegNet<float>& model, std::span<const SequenceSample> data, const TrainConfig& config,
                         const LogSink& sink = {}, Adam<float>* optimizer = nullptr);

/// Joint training of every parameter. Each iteration encodes a whole
/// sequence, runs the configured decoders, sums the per-frame losses of
/// labelled frames and backpropagates through time across the sequence. The
/// learning rate at epoch e is stage2_lr * lr_decay^e. Without an explicit
/// optimizer a fresh Adam instance is used.
TrainingLog train_stage2(const SegNet<float>& model, std::span<const SequenceSample> data, const TrainConfig& config,
                         const LogSink& sink = {}, Adam<float>* optimizer = nullptr);

/// Sequence loss for the configured decoder mode: sum over labelled frames
/// of the per-frame loss. Exposed for tests of temporal gradient flow.
template <typename T>
Tensor<T> sequence_loss(const SegNet<T>& model, std::span<const Tensor<T>> frames,
                        const std::vector<std::optional<LabelVolume>>& labels, LossMode mode);

}  // namespace cardioseq
