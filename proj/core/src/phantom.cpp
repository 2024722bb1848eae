#include "cardioseq/phantom.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace cardioseq {

PhantomConfig PhantomConfig::for_grid(std::size_t frames, const Dims3& extents, std::uint64_t seed) {
  PhantomConfig c;
  c.frames = frames;
  c.extents = extents;
  c.seed = seed;
  const double s = static_cast<double>(std::min(extents.h, extents.w)) / 32.0;
  c.lv_radius *= s;
  c.myo_thickness *= s;
  c.rv_radius *= s;
  c.rv_offset *= s;
  c.center_h = (static_cast<double>(extents.h) - 1.0) / 2.0;
  c.center_w = (static_cast<double>(extents.w) - 1.0) / 2.0 - 3.0 * s;
  return c;
}

PhantomConfig PhantomConfig::jittered(std::mt19937_64& rng) const {
  PhantomConfig c = *this;
  std::uniform_real_distribution<double> shift(-1.0, 1.0);
  std::uniform_real_distribution<double> factor(0.9, 1.1);
  const double s = static_cast<double>(std::min(extents.h, extents.w)) / 32.0;
  if (c.center_h < 0) c.center_h = (static_cast<double>(extents.h) - 1.0) / 2.0;
  if (c.center_w < 0) c.center_w = (static_cast<double>(extents.w) - 1.0) / 2.0;
  c.center_h += shift(rng) * s;
  c.center_w += shift(rng) * s;
  c.lv_radius *= factor(rng);
  c.myo_thickness *= factor(rng);
  c.rv_radius *= factor(rng);
  c.amplitude = std::min(0.95, c.amplitude * factor(rng));
  c.seed = rng();
  return c;
}

namespace {

struct Geometry {
  double ch;
  double cw;
};

Geometry resolve_center(const PhantomConfig& c) {
  return {c.center_h < 0 ? (static_cast<double>(c.extents.h) - 1.0) / 2.0 : c.center_h,
          c.center_w < 0 ? (static_cast<double>(c.extents.w) - 1.0) / 2.0 : c.center_w};
}

}  // namespace

void PhantomConfig::validate() const {
  if (frames == 0) throw ConfigError("phantom needs at least one frame");
  if (extents.d == 0 || extents.h == 0 || extents.w == 0) throw ConfigError("phantom extents must be positive");
  if (!(amplitude >= 0 && amplitude < 1)) throw ConfigError("phantom amplitude must lie in [0, 1)");
  if (!(noise_std >= 0)) throw ConfigError("phantom noise std must be non-negative");
  if (!(apex_taper >= 0 && apex_taper < 1)) throw ConfigError("phantom apex taper must lie in [0, 1)");
  if (!(lv_radius > 0 && myo_thickness > 0 && rv_radius > 0 && rv_offset >= 0)) {
    throw ConfigError("phantom radii and thickness must be positive");
  }
  const auto g = resolve_center(*this);
  const double outer = lv_radius + myo_thickness;
  const double h_max = static_cast<double>(extents.h) - 1.0;
  const double w_max = static_cast<double>(extents.w) - 1.0;
  const bool fits = g.ch - outer >= 0 && g.ch + outer <= h_max && g.cw - outer >= 0 && g.cw + outer <= w_max &&
                    g.ch - rv_radius >= 0 && g.ch + rv_radius <= h_max && g.cw + rv_offset + rv_radius <= w_max &&
                    g.cw + rv_offset - rv_radius >= 0;
  if (!fits) {
    std::ostringstream os;
    os << "phantom geometry overflows the " << extents.h << "x" << extents.w << " grid at maximal dilation (center "
       << g.ch << "," << g.cw << ", outer LV radius " << outer << ", RV reach " << g.cw + rv_offset + rv_radius << ")";
    throw ConfigError(os.str());
  }
}

double contraction_scale(const PhantomConfig& config, std::size_t t) {
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(config.frames);
  return 1.0 - config.amplitude * (1.0 - std::cos(phase)) / 2.0;
}

SequenceSample generate_phantom_sequence(const PhantomConfig& config) {
  config.validate();
  const auto g = resolve_center(config);
  const auto& e = config.extents;
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  SequenceSample sample;
  sample.patient_id = "phantom";
  std::size_t ed = 0;
  std::size_t es = 0;
  for (std::size_t t = 0; t < config.frames; ++t) {
    const double s = contraction_scale(config, t);
    if (s > contraction_scale(config, ed)) ed = t;
    if (s < contraction_scale(config, es)) es = t;
    LabelVolume labels = LabelVolume::zeros(e);
    Volume image = Volume::zeros(e);
    for (std::size_t d = 0; d < e.d; ++d) {
      const double depth_frac = e.d > 1 ? static_cast<double>(d) / static_cast<double>(e.d - 1) : 0.0;
      const double taper = 1.0 - config.apex_taper * depth_frac;
      const double r_lv = config.lv_radius * s * taper;
      const double r_outer = r_lv + config.myo_thickness * taper;
      const double r_rv = config.rv_radius * s * taper;
      const double rv_cw = g.cw + config.rv_offset;
      for (std::size_t h = 0; h < e.h; ++h) {
        const double dh = static_cast<double>(h) - g.ch;
        for (std::size_t w = 0; w < e.w; ++w) {
          const double dw = static_cast<double>(w) - g.cw;
          const double r = std::hypot(dh, dw);
          const double r_from_rv = std::hypot(dh, static_cast<double>(w) - rv_cw);
          std::uint8_t cls = 0;
          if (r < r_lv) {
            cls = 1;
          } else if (r < r_outer) {
            cls = 3;
          } else if (r_from_rv < r_rv) {
            cls = 2;
          }
          labels.at(d, h, w) = cls;
        }
      }
    }
    for (std::size_t i = 0; i < image.data.size(); ++i) {
      image.data[i] = static_cast<float>(config.intensity[labels.data[i]] + config.noise_std * noise(rng));
    }
    sample.frames.push_back(std::move(image));
    sample.labels.emplace_back(std::move(labels));
  }
  sample.ed_index = ed;
  sample.es_index = es;
  return sample;
}

}  // namespace cardioseq
