#include "cardioseq/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>

#include "cardioseq/augment.hpp"
#include "json.hpp"

namespace cardioseq {

void TrainConfig::validate() const {
  if (!(stage1_lr > 0) || !(stage2_lr > 0)) throw ConfigError("learning rates must be positive");
  if (!(lr_decay > 0 && lr_decay <= 1)) throw ConfigError("lr decay must lie in (0, 1]");
  adam.validate();
}

double TrainConfig::stage2_lr_at(std::size_t epoch) const {
  return stage2_lr * std::pow(lr_decay, static_cast<double>(epoch));
}

std::string to_json(const LogRecord& r) {
  nlohmann::ordered_json j;
  j["stage"] = r.stage;
  j["epoch"] = r.epoch;
  j["iter"] = r.iter;
  j["lr"] = r.lr;
  j["loss"] = r.loss;
  j["patient"] = r.patient;
  j["frames"] = r.frames;
  j["batch"] = r.batch;
  return j.dump();
}

void write_log_jsonl(const TrainingLog& log, std::ostream& out) {
  for (const auto& r : log) out << to_json(r) << "\n";
}

TrainingLog read_log_jsonl(std::istream& in) {
  TrainingLog log;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      LogRecord r;
      r.stage = j.at("stage").get<int>();
      r.epoch = j.at("epoch").get<std::size_t>();
      r.iter = j.at("iter").get<std::size_t>();
      r.lr = j.at("lr").get<double>();
      r.loss = j.at("loss").get<double>();
      r.patient = j.value("patient", "");
      r.frames = j.value("frames", std::size_t{0});
      r.batch = j.value("batch", std::size_t{1});
      log.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed training log line: ") + e.what());
    }
  }
  return log;
}

namespace {

std::size_t labelled_frames(const SequenceSample& s) {
  std::size_t n = 0;
  for (const auto& l : s.labels) n += l.has_value();
  return n;
}

void require_labels(std::span<const SequenceSample> data) {
  if (data.empty()) throw ValueError("training set is empty");
  for (const auto& s : data) {
    if (labelled_frames(s) == 0) throw ValueError("sequence '" + s.patient_id + "' has no labelled frame");
  }
}

std::vector<Tensor<float>> frame_tensors(const SequenceSample& s) {
  std::vector<Tensor<float>> out;
  out.reserve(s.length());
  for (const auto& f : s.frames) out.push_back(frame_tensor<float>(f));
  return out;
}

// Visits every (epoch, sequence) pair in training order and hands the
// (optionally augmented) sequence to `step`, which returns the loss value
// and the number of contributing frames.
template <typename Step>
TrainingLog run_epochs(int stage, std::size_t epochs, std::span<const SequenceSample> data, const TrainConfig& config,
                       const LogSink& sink, const std::function<double(std::size_t)>& lr_at, Step step) {
  std::mt19937_64 order_rng(config.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(stage));
  std::mt19937_64 augment_rng(config.seed * 0xD1B54A32D192ED03ULL + static_cast<std::uint64_t>(stage));
  TrainingLog log;
  std::size_t iter = 0;
  std::vector<std::size_t> order(data.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (config.shuffle) std::shuffle(order.begin(), order.end(), order_rng);
    const double lr = lr_at(e);
    for (std::size_t idx : order) {
      const SequenceSample sample = config.augment ? augment(data[idx], augment_rng) : data[idx];
      const auto [loss, frames] = step(sample, lr);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss in stage " + std::to_string(stage) + " at iteration " +
                         std::to_string(iter));
      }
      LogRecord r{stage, e, iter++, lr, loss, sample.patient_id, frames, 1};
      if (sink) sink(r);
      log.push_back(std::move(r));
    }
  }
  return log;
}

}  // namespace

template <typename T>
Tensor<T> sequence_loss(const SegNet<T>& model, std::span<const Tensor<T>> frames,
                        const std::vector<std::optional<LabelVolume>>& labels, LossMode mode) {
  if (labels.size() != frames.size()) throw ShapeError("one label slot per frame is required");
  const auto logits = model.forward(frames);
  Tensor<T> total;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (!labels[t]) continue;
    auto l = segmentation_loss(logits[t], *labels[t], mode);
    total = total.defined() ? add(total, l) : l;
  }
  if (!total.defined()) throw ValueError("sequence has no labelled frame");
  return total;
}

TrainingLog train_stage1(const SegNet<float>& model, std::span<const SequenceSample> data, const TrainConfig& config,
                         const LogSink& sink, Adam<float>* optimizer) {
  config.validate();
  require_labels(data);
  Adam<float> local(config.adam);
  Adam<float>& opt = optimizer ? *optimizer : local;
  const auto params = model.encoder_parameters();
  return run_epochs(
      1, config.stage1_epochs, data, config, sink, [&](std::size_t) { return config.stage1_lr; },
      [&](const SequenceSample& s, double lr) {
        zero_grads(params);
        double total = 0;
        std::size_t frames = 0;
        for (std::size_t t = 0; t < s.length(); ++t) {
          if (!s.labels[t]) continue;
          const auto features = model.encode(frame_tensor<float>(s.frames[t]));
          const auto loss = segmentation_loss(features.logits_head, *s.labels[t], config.loss);
          total += loss.item();
          backward(loss);
          ++frames;
        }
        opt.step(params, lr);
        return std::pair{total, frames};
      });
}

TrainingLog train_stage2(const SegNet<float>& model, std::span<const SequenceSample> data, const TrainConfig& config,
                         const LogSink& sink, Adam<float>* optimizer) {
  config.validate();
  require_labels(data);
  if (model.config().decoder == DecoderMode::bidirectional) {
    for (const auto& s : data) {
      if (s.length() < 2) {
        throw ValueError("bidirectional training needs sequences of at least 2 frames; '" + s.patient_id +
                         "' has " + std::to_string(s.length()));
      }
    }
  }
  Adam<float> local(config.adam);
  Adam<float>& opt = optimizer ? *optimizer : local;
  const auto params = model.parameters();
  return run_epochs(
      2, config.stage2_epochs, data, config, sink, [&](std::size_t e) { return config.stage2_lr_at(e); },
      [&](const SequenceSample& s, double lr) {
        zero_grads(params);
        const auto frames = frame_tensors(s);
        const auto loss = sequence_loss<float>(model, frames, s.labels, config.loss);
        const double value = loss.item();
        backward(loss);
        opt.step(params, lr);
        return std::pair{value, labelled_frames(s)};
      });
}

template Tensor<float> sequence_loss(const SegNet<float>&, std::span<const Tensor<float>>,
                                     const std::vector<std::optional<LabelVolume>>&, LossMode);
template Tensor<double> sequence_loss(const SegNet<double>&, std::span<const Tensor<double>>,
                                      const std::vector<std::optional<LabelVolume>>&, LossMode);

}  // namespace cardioseq
