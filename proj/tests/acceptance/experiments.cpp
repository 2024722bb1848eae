#include "experiments.hpp"

#include <chrono>
#include <map>
#include <random>

namespace cardioseq::acceptance {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<LabelVolume> ground_truth(const SequenceSample& s) {
  std::vector<LabelVolume> gt;
  for (const auto& l : s.labels) gt.push_back(*l);
  return gt;
}

}  // namespace

OverfitResult run_overfit(const OverfitSettings& st) {
  const auto start = std::chrono::steady_clock::now();
  PhantomConfig pc = PhantomConfig::for_grid(8, {8, 32, 32}, st.seed);
  pc.noise_std = 0.05;
  const SequenceSample sample = preprocess(generate_phantom_sequence(pc), pc.extents);

  ModelConfig mc;
  mc.levels = st.channels.size();
  mc.channels = st.channels;
  mc.decoder_channels = st.decoder_channels;
  mc.decoder = DecoderMode::bidirectional;
  SegNet<float> model(mc);
  model.init_parameters(st.seed);

  TrainConfig tc;
  tc.stage1_epochs = 0;
  tc.stage2_epochs = st.iterations;
  tc.stage2_lr = st.lr;
  tc.lr_decay = st.lr_decay;
  tc.loss = st.loss;
  tc.adam.clip_norm = st.clip_norm;
  tc.augment = false;
  tc.seed = st.seed;
  const std::vector<SequenceSample> data{sample};
  const auto log = train_stage2(model, data, tc);

  OverfitResult r;
  r.final_loss = log.back().loss;
  for (const auto& rec : log) r.losses.push_back(rec.loss);
  r.mean_dice = mean_foreground_dice(segment_sequence(sample, model), ground_truth(sample));
  r.seconds = seconds_since(start);
  return r;
}

OrderingRun run_ordering_seed(const OrderingSettings& st, std::uint64_t seed) {
  PhantomConfig base = PhantomConfig::for_grid(st.frames, st.extents);
  base.noise_std = st.noise;
  for (std::size_t c = 0; c < st.intensity.size(); ++c) base.intensity[c] = st.intensity[c];
  std::mt19937_64 rng(seed);
  std::map<std::string, SequenceSample> cohort;
  std::vector<std::string> ids;
  for (std::size_t p = 0; p < st.patients; ++p) {
    auto s = generate_phantom_sequence(base.jittered(rng));
    s.patient_id = "patient" + std::to_string(100 + p);
    ids.push_back(s.patient_id);
    cohort[s.patient_id] = preprocess(s, st.extents);
  }
  const auto split = split_patients(ids, seed);
  std::vector<SequenceSample> train;
  for (const auto& id : split.train) train.push_back(cohort.at(id));

  auto run_mode = [&](DecoderMode mode) {
    ModelConfig mc;
    mc.levels = st.channels.size();
    mc.channels = st.channels;
    mc.decoder = mode;
    SegNet<float> model(mc);
    model.init_parameters(seed);
    TrainConfig tc;
    tc.stage1_epochs = st.stage1_epochs;
    tc.stage1_lr = st.stage1_lr;
    tc.stage2_epochs = st.stage2_epochs;
    tc.stage2_lr = st.stage2_lr;
    tc.lr_decay = st.lr_decay;
    tc.loss = st.loss;
    tc.adam.clip_norm = st.clip_norm;
    tc.seed = seed;
    train_stage1(model, train, tc);
    train_stage2(model, train, tc);
    OrderingScore score;
    for (const auto& id : split.test) {
      const auto& s = cohort.at(id);
      const auto pred = segment_sequence(s, model);
      std::vector<LabelVolume> gt;
      for (const auto& l : s.labels) gt.push_back(*l);
      score.dice += mean_foreground_dice(pred, gt);
      score.consistency += evaluate_sequence(pred, gt, s.ed_index, s.es_index).mean_consistency();
    }
    score.dice /= static_cast<double>(split.test.size());
    score.consistency /= static_cast<double>(split.test.size());
    return score;
  };

  OrderingRun run;
  run.seed = seed;
  run.baseline = run_mode(DecoderMode::none);
  run.forward = run_mode(DecoderMode::forward_only);
  run.bidirectional = run_mode(DecoderMode::bidirectional);
  return run;
}

}  // namespace cardioseq::acceptance
