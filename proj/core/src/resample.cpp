#include "cardioseq/resample.hpp"

#include <cmath>
#include <vector>

namespace cardioseq {

namespace {

struct AxisSample {
  std::size_t i0;
  std::size_t i1;
  double frac;
};

std::vector<AxisSample> axis_samples(std::size_t n_in, std::size_t n_out, const char* axis) {
  if (n_out == 0) throw ShapeError(std::string("target extent along ") + axis + " must be >= 1");
  std::vector<AxisSample> s(n_out);
  if (n_in == n_out) {
    for (std::size_t i = 0; i < n_out; ++i) s[i] = {i, i, 0.0};
    return s;
  }
  if (n_in < 2) {
    throw ShapeError(std::string("cannot resample degenerate axis ") + axis + " of extent " + std::to_string(n_in) +
                     " to " + std::to_string(n_out));
  }
  if (n_out == 1) {
    s[0] = {0, 0, 0.0};
    return s;
  }
  const double step = static_cast<double>(n_in - 1) / static_cast<double>(n_out - 1);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double x = static_cast<double>(i) * step;
    std::size_t i0 = static_cast<std::size_t>(std::floor(x));
    if (i0 >= n_in - 1) i0 = n_in - 2;
    s[i] = {i0, i0 + 1, x - static_cast<double>(i0)};
  }
  return s;
}

double lerp(double a, double b, double t) { return a + t * (b - a); }

std::size_t nearest(const AxisSample& s) { return s.frac < 0.5 ? s.i0 : s.i1; }

}  // namespace

Volume resample_linear(const Volume& volume, const Dims3& target) {
  const auto& e = volume.extents;
  const auto sd = axis_samples(e.d, target.d, "depth");
  const auto sh = axis_samples(e.h, target.h, "height");
  const auto sw = axis_samples(e.w, target.w, "width");
  Volume out = Volume::zeros(target);
  for (std::size_t d = 0; d < target.d; ++d) {
    for (std::size_t h = 0; h < target.h; ++h) {
      for (std::size_t w = 0; w < target.w; ++w) {
        auto plane = [&](std::size_t dd) {
          const double top = lerp(volume.at(dd, sh[h].i0, sw[w].i0), volume.at(dd, sh[h].i0, sw[w].i1), sw[w].frac);
          const double bot = lerp(volume.at(dd, sh[h].i1, sw[w].i0), volume.at(dd, sh[h].i1, sw[w].i1), sw[w].frac);
          return lerp(top, bot, sh[h].frac);
        };
        out.at(d, h, w) = static_cast<float>(lerp(plane(sd[d].i0), plane(sd[d].i1), sd[d].frac));
      }
    }
  }
  out.spacing = {volume.spacing[0] * static_cast<double>(e.d) / static_cast<double>(target.d),
                 volume.spacing[1] * static_cast<double>(e.h) / static_cast<double>(target.h),
                 volume.spacing[2] * static_cast<double>(e.w) / static_cast<double>(target.w)};
  out.origin = volume.origin;
  return out;
}

LabelVolume resample_nearest(const LabelVolume& labels, const Dims3& target) {
  const auto& e = labels.extents;
  const auto sd = axis_samples(e.d, target.d, "depth");
  const auto sh = axis_samples(e.h, target.h, "height");
  const auto sw = axis_samples(e.w, target.w, "width");
  LabelVolume out = LabelVolume::zeros(target);
  for (std::size_t d = 0; d < target.d; ++d) {
    for (std::size_t h = 0; h < target.h; ++h) {
      for (std::size_t w = 0; w < target.w; ++w) {
        out.at(d, h, w) = labels.at(nearest(sd[d]), nearest(sh[h]), nearest(sw[w]));
      }
    }
  }
  return out;
}

Volume normalize_intensity(const Volume& volume) {
  Volume out = volume;
  const double n = static_cast<double>(volume.data.size());
  double mean = 0;
  for (float v : volume.data) mean += v;
  mean /= n;
  double var = 0;
  for (float v : volume.data) var += (v - mean) * (v - mean);
  var /= n;
  if (var <= 0) {
    std::fill(out.data.begin(), out.data.end(), 0.0f);
    return out;
  }
  const double inv = 1.0 / std::sqrt(var);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = static_cast<float>((volume.data[i] - mean) * inv);
  return out;
}

}  // namespace cardioseq
