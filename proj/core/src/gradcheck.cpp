#include "cardioseq/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cardioseq/layers.hpp"
#include "cardioseq/loss.hpp"
#include "cardioseq/model.hpp"
#include "cardioseq/ops.hpp"

namespace cardioseq {

using TD = Tensor<double>;

GradcheckResult check_gradient(const std::string& name, const ScalarFunction& f, std::vector<TD> inputs,
                               const GradcheckOptions& options) {
  GradcheckResult result;
  result.name = name;
  for (auto& in : inputs) {
    if (in.requires_grad()) in.zero_grad();
  }
  const TD loss = f(inputs);
  backward(loss);
  std::vector<std::vector<double>> analytic;
  for (const auto& in : inputs) {
    const auto g = in.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  std::mt19937_64 rng(options.seed);
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& in = inputs[k];
    if (!in.requires_grad()) continue;
    std::vector<std::size_t> coords(in.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coordinates > 0 && coords.size() > options.max_coordinates) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coordinates);
    }
    auto values = in.mutable_data();
    for (std::size_t i : coords) {
      const double original = values[i];
      const double a = analytic[k][i];
      double best = std::numeric_limits<double>::infinity();
      for (double h : options.steps) {
        values[i] = original + h;
        const double fp = f(inputs).item();
        values[i] = original - h;
        const double fm = f(inputs).item();
        values[i] = original;
        const double n = (fp - fm) / (2 * h);
        const double err = std::abs(a - n) / std::max({std::abs(a), std::abs(n), options.floor});
        best = std::min(best, err);
        if (best < options.threshold) break;
      }
      result.worst_error = std::max(result.worst_error, best);
      ++result.coordinates;
    }
  }
  result.passed = result.worst_error < options.threshold;
  return result;
}

bool GradcheckReport::passed() const {
  return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
}

namespace {

class Fixture {
 public:
  explicit Fixture(std::uint64_t seed) : rng_(seed) {}

  TD uniform(Shape shape, double lo, double hi, bool grad = true) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = dist(rng_);
    return TD::from_data(std::move(shape), std::move(v), grad);
  }
  TD normal(Shape shape, bool grad = true) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = dist(rng_);
    return TD::from_data(std::move(shape), std::move(v), grad);
  }
  // Values bounded away from zero, for the ReLU kink.
  TD away_from_zero(Shape shape) {
    TD t = normal(std::move(shape));
    for (auto& x : t.mutable_data()) x = x >= 0 ? x + 0.1 : x - 0.1;
    return t;
  }
  LabelVolume labels(const Dims3& extents) {
    std::uniform_int_distribution<int> dist(0, 3);
    LabelVolume l = LabelVolume::zeros(extents);
    for (auto& x : l.data) x = static_cast<std::uint8_t>(dist(rng_));
    return l;
  }
  std::uint64_t next() { return rng_(); }

  // Scalar probe: sum(out * R) with a fixed random R per output shape slot.
  TD probe(const TD& out, std::size_t slot) {
    while (weights_.size() <= slot) weights_.emplace_back();
    if (!weights_[slot].defined() || weights_[slot].shape() != out.shape()) {
      weights_[slot] = normal(out.shape(), false);
    }
    return sum(mul(out, weights_[slot]));
  }

 private:
  std::mt19937_64 rng_;
  std::vector<TD> weights_;
};

template <typename Params>
void append_parameters(const Params& params, std::vector<TD>& inputs) {
  for (const auto& p : params) inputs.push_back(p.tensor);
}

ModelConfig toy_config(DecoderMode decoder, FusionMode fusion) {
  ModelConfig c;
  c.levels = 2;
  c.channels = {2, 3};
  c.decoder = decoder;
  c.fusion = fusion;
  return c;
}

}  // namespace

std::vector<std::string> gradcheck_suite_names() {
  return {"conv",         "max_pool",        "upsample_nearest", "add",           "sub",
          "mul",          "scale",           "relu",             "sigmoid",       "tanh",
          "neg",          "log",             "concat_channels",  "slice_channels", "softmax_channels",
          "instance_norm", "sum",            "mean",             "cross_entropy", "soft_dice",
          "residual_block", "convlstm_3_steps", "encoder",        "decoder_2_frames",
          "segnet_bidirectional_average", "segnet_bidirectional_learned"};
}

GradcheckReport run_gradcheck_suite(std::uint64_t seed, double threshold) {
  GradcheckReport report;
  Fixture fx(seed);
  GradcheckOptions full;
  full.threshold = threshold;
  full.seed = seed;
  GradcheckOptions sampled = full;
  sampled.max_coordinates = 6;

  auto run = [&](const std::string& name, const ScalarFunction& f, std::vector<TD> inputs,
                 const GradcheckOptions& opts) {
    report.results.push_back(check_gradient(name, f, std::move(inputs), opts));
  };

  {
    const ConvSpec same{{1, 1, 1}, {1, 1, 1}};
    const ConvSpec strided{{1, 2, 2}, {1, 1, 1}};
    run("conv",
        [&](const std::vector<TD>& in) {
          return add(fx.probe(conv(in[0], in[1], in[2], same), 0), fx.probe(conv(in[0], in[1], strided), 1));
        },
        {fx.normal({2, 3, 5, 5}), fx.normal({3, 2, 3, 3, 3}), fx.normal({3})}, full);
  }
  run("max_pool",
      [&](const std::vector<TD>& in) {
        return add(fx.probe(max_pool(in[0], {2, 2, 2}), 0), fx.probe(max_pool(in[0], {1, 2, 2}), 1));
      },
      {fx.normal({2, 4, 4, 4})}, full);
  run("upsample_nearest", [&](const std::vector<TD>& in) { return fx.probe(upsample_nearest(in[0], {1, 2, 2}), 0); },
      {fx.normal({2, 2, 2, 2})}, full);
  run("add",
      [&](const std::vector<TD>& in) { return add(fx.probe(add(in[0], in[1]), 0), fx.probe(add(in[0], in[2]), 1)); },
      {fx.normal({2, 3, 3}), fx.normal({2, 3, 3}), fx.normal({1})}, full);
  run("sub",
      [&](const std::vector<TD>& in) { return add(fx.probe(sub(in[0], in[1]), 0), fx.probe(sub(in[2], in[0]), 1)); },
      {fx.normal({2, 3, 3}), fx.normal({2, 3, 3}), fx.normal({1})}, full);
  run("mul",
      [&](const std::vector<TD>& in) { return add(fx.probe(mul(in[0], in[1]), 0), fx.probe(mul(in[2], in[0]), 1)); },
      {fx.normal({2, 3, 3}), fx.normal({2, 3, 3}), fx.normal({1})}, full);
  run("scale", [&](const std::vector<TD>& in) { return fx.probe(scale(in[0], -1.7), 0); }, {fx.normal({2, 3, 3})},
      full);
  run("relu", [&](const std::vector<TD>& in) { return fx.probe(relu(in[0]), 0); }, {fx.away_from_zero({2, 3, 3})},
      full);
  run("sigmoid", [&](const std::vector<TD>& in) { return fx.probe(sigmoid(in[0]), 0); }, {fx.normal({2, 3, 3})},
      full);
  run("tanh", [&](const std::vector<TD>& in) { return fx.probe(tanh(in[0]), 0); }, {fx.normal({2, 3, 3})}, full);
  run("neg", [&](const std::vector<TD>& in) { return fx.probe(neg(in[0]), 0); }, {fx.normal({2, 3, 3})}, full);
  run("log", [&](const std::vector<TD>& in) { return fx.probe(log(in[0]), 0); }, {fx.uniform({2, 3, 3}, 0.5, 2.0)},
      full);
  run("concat_channels", [&](const std::vector<TD>& in) { return fx.probe(concat_channels(in[0], in[1]), 0); },
      {fx.normal({2, 2, 3}), fx.normal({3, 2, 3})}, full);
  run("slice_channels", [&](const std::vector<TD>& in) { return fx.probe(slice_channels(in[0], 1, 2), 0); },
      {fx.normal({4, 2, 3})}, full);
  run("softmax_channels", [&](const std::vector<TD>& in) { return fx.probe(softmax_channels(in[0]), 0); },
      {fx.normal({4, 2, 2, 2})}, full);
  run("instance_norm", [&](const std::vector<TD>& in) { return fx.probe(instance_norm(in[0]), 0); },
      {fx.normal({3, 2, 3, 3})}, full);
  run("sum", [&](const std::vector<TD>& in) { return scale(sum(in[0]), 0.37); }, {fx.normal({2, 3, 3})}, full);
  run("mean", [&](const std::vector<TD>& in) { return scale(mean(in[0]), 1.9); }, {fx.normal({2, 3, 3})}, full);
  {
    const LabelVolume target = fx.labels({2, 2, 2});
    run("cross_entropy", [&](const std::vector<TD>& in) { return cross_entropy(in[0], target); },
        {fx.normal({4, 2, 2, 2})}, full);
    run("soft_dice", [&](const std::vector<TD>& in) { return soft_dice_loss(in[0], target); },
        {fx.normal({4, 2, 2, 2})}, full);
  }
  {
    ResidualBlock<double> block(2, 3);
    ParameterList<double> params;
    block.collect_parameters("block", params);
    init_parameters(params, fx.next());
    std::vector<TD> inputs{fx.normal({2, 2, 4, 4})};
    append_parameters(params, inputs);
    run("residual_block", [&](const std::vector<TD>& in) { return fx.probe(block.forward(in[0]), 0); }, inputs,
        sampled);
  }
  {
    ConvLSTMCell<double> cell(2, 3);
    ParameterList<double> params;
    cell.collect_parameters("cell", params);
    init_parameters(params, fx.next());
    std::vector<TD> inputs{fx.normal({2, 2, 3, 3}), fx.normal({2, 2, 3, 3}), fx.normal({2, 2, 3, 3})};
    append_parameters(params, inputs);
    run("convlstm_3_steps",
        [&](const std::vector<TD>& in) {
          auto state = cell.initial_state({2, 3, 3});
          TD total;
          for (std::size_t t = 0; t < 3; ++t) {
            auto [out, next] = cell.step(in[t], state);
            state = next;
            const TD term = fx.probe(out, t);
            total = total.defined() ? add(total, term) : term;
          }
          return add(total, fx.probe(state.cell, 3));
        },
        inputs, sampled);
  }
  {
    SegNet<double> model(toy_config(DecoderMode::none, FusionMode::average));
    model.init_parameters(fx.next());
    std::vector<TD> inputs{fx.normal({1, 2, 4, 4})};
    append_parameters(model.encoder_parameters(), inputs);
    run("encoder",
        [&](const std::vector<TD>& in) {
          const auto features = model.encode(in[0]);
          TD total = fx.probe(features.logits_head, 0);
          for (std::size_t k = 0; k < features.g.size(); ++k) total = add(total, fx.probe(features.g[k], k + 1));
          return total;
        },
        inputs, sampled);
  }
  {
    SegNet<double> model(toy_config(DecoderMode::bidirectional, FusionMode::average));
    model.init_parameters(fx.next());
    std::vector<EncoderFeatures<double>> features;
    {
      NoGradGuard guard;
      for (int t = 0; t < 2; ++t) {
        auto f = model.encode(fx.normal({1, 2, 4, 4}, false));
        for (auto& g : f.g) g = TD::from_data(g.shape(), std::vector<double>(g.data().begin(), g.data().end()), true);
        features.push_back(std::move(f));
      }
    }
    std::vector<TD> inputs;
    for (const auto& f : features) inputs.insert(inputs.end(), f.g.begin(), f.g.end());
    append_parameters(model.decoder_parameters(), inputs);
    run("decoder_2_frames",
        [&](const std::vector<TD>& in) {
          (void)in;
          const auto fwd = model.decode_directional(features, Direction::forward);
          const auto bwd = model.decode_directional(features, Direction::backward);
          TD total;
          for (std::size_t t = 0; t < 2; ++t) {
            const TD term = add(fx.probe(fwd[t], 2 * t), fx.probe(bwd[t], 2 * t + 1));
            total = total.defined() ? add(total, term) : term;
          }
          return total;
        },
        inputs, sampled);
  }
  for (FusionMode fusion : {FusionMode::average, FusionMode::learned}) {
    SegNet<double> model(toy_config(DecoderMode::bidirectional, fusion));
    model.init_parameters(fx.next());
    std::vector<TD> inputs{fx.normal({1, 2, 4, 4}), fx.normal({1, 2, 4, 4}), fx.normal({1, 2, 4, 4})};
    append_parameters(model.parameters(), inputs);
    std::vector<LabelVolume> targets{fx.labels({2, 4, 4}), fx.labels({2, 4, 4}), fx.labels({2, 4, 4})};
    run(fusion == FusionMode::average ? "segnet_bidirectional_average" : "segnet_bidirectional_learned",
        [&](const std::vector<TD>& in) {
          const std::vector<TD> frames(in.begin(), in.begin() + 3);
          const auto logits = model.forward(frames);
          TD total;
          for (std::size_t t = 0; t < 3; ++t) {
            const TD term = cross_entropy(logits[t], targets[t]);
            total = total.defined() ? add(total, term) : term;
          }
          return total;
        },
        inputs, sampled);
  }
  return report;
}

}  // namespace cardioseq
