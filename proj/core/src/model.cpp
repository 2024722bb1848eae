#include "cardioseq/model.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "cardioseq/hash.hpp"

namespace cardioseq {

namespace {

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    parts.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::size_t parse_size(std::string_view s, std::string_view key) {
  s = trim(s);
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("invalid integer '" + std::string(s) + "' for " + std::string(key));
  }
  return v;
}

std::vector<std::size_t> parse_list(std::string_view s, std::string_view key) {
  std::vector<std::size_t> out;
  if (trim(s).empty()) return out;
  for (auto part : split(s, ',')) out.push_back(parse_size(part, key));
  return out;
}

Dims3 parse_dims(std::string_view s, std::string_view key) {
  const auto parts = split(trim(s), 'x');
  if (parts.size() != 3) throw ConfigError("expected DxHxW for " + std::string(key) + ", got '" + std::string(s) + "'");
  return {parse_size(parts[0], key), parse_size(parts[1], key), parse_size(parts[2], key)};
}

std::string dims_text(const Dims3& d) {
  return std::to_string(d.d) + "x" + std::to_string(d.h) + "x" + std::to_string(d.w);
}

std::string list_text(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

template <typename T>
Dims3 spatial(const Tensor<T>& t) {
  return {t.extent(1), t.extent(2), t.extent(3)};
}

Dims3 ratio(const Dims3& fine, const Dims3& coarse) {
  if (fine.d % coarse.d || fine.h % coarse.h || fine.w % coarse.w) {
    throw ShapeError("level extents " + to_string(fine) + " are not a multiple of " + to_string(coarse));
  }
  return {fine.d / coarse.d, fine.h / coarse.h, fine.w / coarse.w};
}

}  // namespace

std::string to_string(DecoderMode mode) {
  switch (mode) {
    case DecoderMode::none: return "none";
    case DecoderMode::forward_only: return "forward_only";
    case DecoderMode::bidirectional: return "bidirectional";
  }
  return "?";
}

std::string to_string(FusionMode mode) { return mode == FusionMode::average ? "average" : "learned"; }

DecoderMode parse_decoder_mode(std::string_view text) {
  if (text == "none") return DecoderMode::none;
  if (text == "forward_only") return DecoderMode::forward_only;
  if (text == "bidirectional") return DecoderMode::bidirectional;
  throw ConfigError("unknown decoder mode '" + std::string(text) + "'");
}

FusionMode parse_fusion_mode(std::string_view text) {
  if (text == "average") return FusionMode::average;
  if (text == "learned") return FusionMode::learned;
  throw ConfigError("unknown fusion mode '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
  if (levels < 2) throw ConfigError("model needs at least 2 levels, got " + std::to_string(levels));
  if (channels.size() != levels) {
    throw ConfigError("expected " + std::to_string(levels) + " channel widths, got " + std::to_string(channels.size()));
  }
  if (channels.front() == 0) throw ConfigError("channel widths must be >= 1");
  for (std::size_t i = 1; i < channels.size(); ++i) {
    if (channels[i] <= channels[i - 1]) throw ConfigError("channel widths must be strictly increasing");
  }
  if (!decoder_channels.empty()) {
    if (decoder_channels.size() != levels) {
      throw ConfigError("expected " + std::to_string(levels) + " decoder widths, got " +
                        std::to_string(decoder_channels.size()));
    }
    for (auto c : decoder_channels) {
      if (c == 0) throw ConfigError("decoder widths must be >= 1");
    }
  }
  if (!pooling.empty()) {
    if (pooling.size() != levels - 1) {
      throw ConfigError("expected " + std::to_string(levels - 1) + " pooling factors, got " +
                        std::to_string(pooling.size()));
    }
    for (const auto& f : pooling) {
      if (f.d == 0 || f.h == 0 || f.w == 0) throw ConfigError("pooling factors must be >= 1");
    }
  }
  if (kernel.d % 2 == 0 || kernel.h % 2 == 0 || kernel.w % 2 == 0) {
    throw ConfigError("kernel extents must be odd, got " + dims_text(kernel));
  }
}

std::vector<std::size_t> ModelConfig::hidden_channels() const {
  return decoder_channels.empty() ? channels : decoder_channels;
}

std::string ModelConfig::serialize() const {
  std::ostringstream os;
  os << "levels=" << levels << '\n';
  os << "channels=" << list_text(channels) << '\n';
  os << "decoder_channels=" << list_text(decoder_channels) << '\n';
  os << "pooling=";
  if (pooling.empty()) {
    os << "auto";
  } else {
    for (std::size_t i = 0; i < pooling.size(); ++i) os << (i ? "," : "") << dims_text(pooling[i]);
  }
  os << '\n';
  os << "kernel=" << dims_text(kernel) << '\n';
  os << "decoder=" << to_string(decoder) << '\n';
  os << "fusion=" << to_string(fusion) << '\n';
  os << "instance_norm=" << (instance_norm ? 1 : 0) << '\n';
  return os.str();
}

ModelConfig ModelConfig::parse(std::string_view text) {
  ModelConfig c;
  for (auto line : split(text, '\n')) {
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("malformed model config line '" + std::string(line) + "'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key == "levels") {
      c.levels = parse_size(value, key);
    } else if (key == "channels") {
      c.channels = parse_list(value, key);
    } else if (key == "decoder_channels") {
      c.decoder_channels = parse_list(value, key);
    } else if (key == "pooling") {
      c.pooling.clear();
      if (value != "auto") {
        for (auto part : split(value, ',')) c.pooling.push_back(parse_dims(part, key));
      }
    } else if (key == "kernel") {
      c.kernel = parse_dims(value, key);
    } else if (key == "decoder") {
      c.decoder = parse_decoder_mode(value);
    } else if (key == "fusion") {
      c.fusion = parse_fusion_mode(value);
    } else if (key == "instance_norm") {
      c.instance_norm = parse_size(value, key) != 0;
    } else {
      throw ConfigError("unknown model config key '" + std::string(key) + "'");
    }
  }
  c.validate();
  return c;
}

std::uint64_t ModelConfig::digest() const {
  Fnv1a h;
  h.update(serialize());
  return h.digest();
}

std::vector<Dims3> resolve_pooling(const ModelConfig& config, const Dims3& input) {
  std::vector<Dims3> factors = config.pooling;
  if (factors.empty()) {
    Dims3 cur = input;
    for (std::size_t k = 0; k + 1 < config.levels; ++k) {
      const Dims3 f{cur.d < 8 ? std::size_t{1} : std::size_t{2}, 2, 2};
      factors.push_back(f);
      cur = {std::max<std::size_t>(1, cur.d / f.d), std::max<std::size_t>(1, cur.h / f.h),
             std::max<std::size_t>(1, cur.w / f.w)};
    }
  }
  Dims3 cumulative{1, 1, 1};
  for (const auto& f : factors) cumulative = {cumulative.d * f.d, cumulative.h * f.h, cumulative.w * f.w};
  if (input.d % cumulative.d || input.h % cumulative.h || input.w % cumulative.w) {
    throw ShapeError("input extents " + to_string(input) + " must be divisible by " + to_string(cumulative) +
                     " (cumulative pooling factors)");
  }
  return factors;
}

template <typename T>
Encoder<T>::Encoder(const ModelConfig& config)
    : head_(config.channels.front(), kNumClasses, Dims3{1, 1, 1}) {
  const auto& ch = config.channels;
  for (std::size_t k = 0; k < config.levels; ++k) {
    down_.emplace_back(k == 0 ? 1 : ch[k - 1], ch[k], config.kernel, config.instance_norm);
  }
  for (std::size_t k = 0; k + 1 < config.levels; ++k) {
    up_conv_.emplace_back(ch[k + 1], ch[k], config.kernel);
    up_.emplace_back(ch[k], ch[k], config.kernel, config.instance_norm);
  }
}

template <typename T>
EncoderFeatures<T> Encoder<T>::encode(const Tensor<T>& frame, const std::vector<Dims3>& pooling) const {
  if (frame.rank() != 4 || frame.extent(0) != 1) {
    throw ShapeError("encoder expects a [1, D, H, W] frame, got " + to_string(frame.shape()));
  }
  const std::size_t K = down_.size();
  std::vector<Tensor<T>> skips;
  Tensor<T> x = frame;
  for (std::size_t k = 0; k < K; ++k) {
    if (k > 0) x = max_pool(x, pooling[k - 1]);
    x = down_[k].forward(x);
    skips.push_back(x);
  }
  EncoderFeatures<T> out;
  Tensor<T> u = skips.back();
  out.g.push_back(u);
  for (std::size_t k = K - 1; k-- > 0;) {
    const Tensor<T> up = up_conv_[k].forward(upsample_nearest(u, pooling[k]));
    u = up_[k].forward(add(skips[k], up));
    out.g.push_back(u);
  }
  out.logits_head = head_.forward(u);
  return out;
}

template <typename T>
void Encoder<T>::collect_parameters(const std::string& prefix, ParameterList<T>& out) const {
  for (std::size_t k = 0; k < down_.size(); ++k) down_[k].collect_parameters(prefix + ".down" + std::to_string(k), out);
  for (std::size_t k = 0; k < up_.size(); ++k) {
    up_conv_[k].collect_parameters(prefix + ".upconv" + std::to_string(k), out);
    up_[k].collect_parameters(prefix + ".up" + std::to_string(k), out);
  }
  head_.collect_parameters(prefix + ".head", out);
}

template <typename T>
DecoderStack<T>::DecoderStack(const ModelConfig& config)
    : head_(config.hidden_channels().front(), kNumClasses, Dims3{1, 1, 1}) {
  const auto hidden = config.hidden_channels();
  const std::size_t K = config.levels;
  // Level j (coarse to fine) reads encoder level K-1-j.
  for (std::size_t j = 0; j < K; ++j) {
    const std::size_t level = K - 1 - j;
    const std::size_t in = config.channels[level] + (j == 0 ? 0 : hidden[level + 1]);
    cells_.emplace_back(in, hidden[level], config.kernel);
  }
}

template <typename T>
typename DecoderStack<T>::States DecoderStack<T>::initial_states(const EncoderFeatures<T>& features) const {
  States states;
  for (std::size_t j = 0; j < cells_.size(); ++j) states.push_back(cells_[j].initial_state(spatial(features.g[j])));
  return states;
}

template <typename T>
typename DecoderStack<T>::Step DecoderStack<T>::step(const EncoderFeatures<T>& features,
                                                      const States& previous) const {
  if (features.g.size() != cells_.size()) {
    throw ShapeError("decoder expects " + std::to_string(cells_.size()) + " feature levels, got " +
                     std::to_string(features.g.size()));
  }
  Step out;
  Tensor<T> y;
  for (std::size_t j = 0; j < cells_.size(); ++j) {
    const Tensor<T>& g = features.g[j];
    const Tensor<T> input = j == 0 ? g : concat_channels(g, upsample_nearest(y, ratio(spatial(g), spatial(y))));
    auto [output, state] = cells_[j].step(input, previous[j]);
    y = output;
    out.states.push_back(std::move(state));
  }
  out.logits = head_.forward(y);
  return out;
}

template <typename T>
SequenceLogits<T> DecoderStack<T>::run(std::span<const EncoderFeatures<T>> features, Direction direction,
                                       std::vector<States>* states_after) const {
  if (features.empty()) throw ShapeError("cannot decode an empty sequence");
  const std::size_t T_len = features.size();
  for (const auto& f : features) {
    if (f.g.size() != features[0].g.size()) throw ShapeError("mixed feature hierarchies across frames");
    for (std::size_t j = 0; j < f.g.size(); ++j) {
      if (f.g[j].shape() != features[0].g[j].shape()) {
        throw ShapeError("mixed frame shapes in sequence: " + to_string(f.g[j].shape()) + " vs " +
                         to_string(features[0].g[j].shape()));
      }
    }
  }
  SequenceLogits<T> logits(T_len);
  if (states_after) states_after->assign(T_len, {});
  States state = initial_states(features[0]);
  for (std::size_t n = 0; n < T_len; ++n) {
    const std::size_t t = direction == Direction::forward ? n : T_len - 1 - n;
    auto result = step(features[t], state);
    logits[t] = std::move(result.logits);
    state = std::move(result.states);
    if (states_after) (*states_after)[t] = state;
  }
  return logits;
}

template <typename T>
void DecoderStack<T>::collect_parameters(const std::string& prefix, ParameterList<T>& out) const {
  for (std::size_t j = 0; j < cells_.size(); ++j) cells_[j].collect_parameters(prefix + ".cell" + std::to_string(j), out);
  head_.collect_parameters(prefix + ".head", out);
}

template <typename T>
SequenceLogits<T> fuse_bidirectional(const SequenceLogits<T>& fwd, const SequenceLogits<T>& bwd) {
  if (fwd.size() != bwd.size()) {
    throw ShapeError("cannot fuse sequences of length " + std::to_string(fwd.size()) + " and " +
                     std::to_string(bwd.size()));
  }
  SequenceLogits<T> out;
  out.reserve(fwd.size());
  for (std::size_t t = 0; t < fwd.size(); ++t) out.push_back(scale(add(fwd[t], bwd[t]), T(0.5)));
  return out;
}

template <typename T>
SegNet<T>::SegNet(ModelConfig config)
    : config_((config.validate(), std::move(config))),
      encoder_(config_),
      evaluations_(std::make_shared<std::array<std::atomic<std::size_t>, 2>>()) {
  if (config_.decoder != DecoderMode::none) forward_decoder_.emplace(config_);
  if (config_.decoder == DecoderMode::bidirectional) {
    backward_decoder_.emplace(config_);
    if (config_.fusion == FusionMode::learned) fusion_.emplace(2 * kNumClasses, kNumClasses, Dims3{1, 1, 1});
  }
}

template <typename T>
EncoderFeatures<T> SegNet<T>::encode(const Tensor<T>& frame) const {
  if (frame.rank() != 4) throw ShapeError("frame must be [1, D, H, W], got " + to_string(frame.shape()));
  return encoder_.encode(frame, resolve_pooling(config_, spatial(frame)));
}

template <typename T>
std::vector<EncoderFeatures<T>> SegNet<T>::encode_sequence(std::span<const Tensor<T>> frames) const {
  std::vector<EncoderFeatures<T>> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(encode(f));
  return out;
}

template <typename T>
SequenceLogits<T> SegNet<T>::decode_directional(std::span<const EncoderFeatures<T>> features,
                                                Direction direction) const {
  const DecoderStack<T>* stack = decoder(direction);
  if (!stack) throw ConfigError("model has no " + std::string(direction == Direction::forward ? "forward" : "backward") +
                                " decoder in mode " + to_string(config_.decoder));
  ++(*evaluations_)[direction == Direction::forward ? 0 : 1];
  return stack->run(features, direction);
}

template <typename T>
SequenceLogits<T> SegNet<T>::fuse(const SequenceLogits<T>& fwd, const SequenceLogits<T>& bwd) const {
  if (!fusion_) return fuse_bidirectional(fwd, bwd);
  if (fwd.size() != bwd.size()) throw ShapeError("cannot fuse sequences of different lengths");
  SequenceLogits<T> out;
  for (std::size_t t = 0; t < fwd.size(); ++t) out.push_back(fusion_->forward(concat_channels(fwd[t], bwd[t])));
  return out;
}

template <typename T>
SequenceLogits<T> SegNet<T>::forward_features(std::span<const EncoderFeatures<T>> features) const {
  switch (config_.decoder) {
    case DecoderMode::none: {
      SequenceLogits<T> out;
      for (const auto& f : features) out.push_back(f.logits_head);
      return out;
    }
    case DecoderMode::forward_only: return decode_directional(features, Direction::forward);
    case DecoderMode::bidirectional:
      return fuse(decode_directional(features, Direction::forward), decode_directional(features, Direction::backward));
  }
  return {};
}

template <typename T>
SequenceLogits<T> SegNet<T>::forward(std::span<const Tensor<T>> frames) const {
  const auto features = encode_sequence(frames);
  return forward_features(features);
}

template <typename T>
ParameterList<T> SegNet<T>::encoder_parameters() const {
  ParameterList<T> out;
  encoder_.collect_parameters("encoder", out);
  return out;
}

template <typename T>
ParameterList<T> SegNet<T>::decoder_parameters() const {
  ParameterList<T> out;
  if (forward_decoder_) forward_decoder_->collect_parameters("decoder_fwd", out);
  if (backward_decoder_) backward_decoder_->collect_parameters("decoder_bwd", out);
  if (fusion_) fusion_->collect_parameters("fusion", out);
  return out;
}

template <typename T>
ParameterList<T> SegNet<T>::parameters() const {
  auto out = encoder_parameters();
  auto dec = decoder_parameters();
  out.insert(out.end(), dec.begin(), dec.end());
  return out;
}

template <typename T>
void SegNet<T>::init_parameters(std::uint64_t seed) const {
  cardioseq::init_parameters(parameters(), seed);
}

template <typename T>
const DecoderStack<T>* SegNet<T>::decoder(Direction direction) const {
  const auto& d = direction == Direction::forward ? forward_decoder_ : backward_decoder_;
  return d ? &*d : nullptr;
}

template <typename T>
void SegNet<T>::swap_directional_decoders() {
  std::swap(forward_decoder_, backward_decoder_);
}

template <typename T>
std::size_t SegNet<T>::decoder_evaluations(Direction direction) const {
  return (*evaluations_)[direction == Direction::forward ? 0 : 1];
}

template <typename T>
LabelVolume argmax_labels(const Tensor<T>& logits) {
  if (logits.rank() != 4 || logits.extent(0) != kNumClasses) {
    throw ShapeError("argmax_labels expects [4, D, H, W] logits, got " + to_string(logits.shape()));
  }
  LabelVolume labels = LabelVolume::zeros(spatial(logits));
  const std::size_t V = labels.data.size();
  const auto x = logits.data();
  for (std::size_t v = 0; v < V; ++v) {
    std::uint8_t best = 0;
    for (std::uint8_t c = 1; c < kNumClasses; ++c) {
      if (x[c * V + v] > x[best * V + v]) best = c;
    }
    labels.data[v] = best;
  }
  return labels;
}

template <typename T>
Tensor<T> frame_tensor(const Volume& volume) {
  return Tensor<T>::from_data({1, volume.extents.d, volume.extents.h, volume.extents.w},
                              std::vector<T>(volume.data.begin(), volume.data.end()));
}

template <typename T>
std::vector<LabelVolume> segment_sequence(const SequenceSample& sample, const SegNet<T>& model) {
  sample.validate();
  NoGradGuard no_grad;
  std::vector<Tensor<T>> frames;
  for (const auto& f : sample.frames) frames.push_back(frame_tensor<T>(f));
  const auto logits = model.forward(frames);
  std::vector<LabelVolume> out;
  for (const auto& l : logits) out.push_back(argmax_labels(l));
  return out;
}

template class Encoder<float>;
template class Encoder<double>;
template class DecoderStack<float>;
template class DecoderStack<double>;
template class SegNet<float>;
template class SegNet<double>;
template SequenceLogits<float> fuse_bidirectional(const SequenceLogits<float>&, const SequenceLogits<float>&);
template SequenceLogits<double> fuse_bidirectional(const SequenceLogits<double>&, const SequenceLogits<double>&);
template LabelVolume argmax_labels(const Tensor<float>&);
template LabelVolume argmax_labels(const Tensor<double>&);
template Tensor<float> frame_tensor(const Volume&);
template Tensor<double> frame_tensor(const Volume&);
template std::vector<LabelVolume> segment_sequence(const SequenceSample&, const SegNet<float>&);
template std::vector<LabelVolume> segment_sequence(const SequenceSample&, const SegNet<double>&);

}  // namespace cardioseq
