#include "cardioseq/augment.hpp"

#include <cmath>

namespace cardioseq {

std::string to_string(Augmentation a) {
  switch (a) {
    case Augmentation::identity: return "identity";
    case Augmentation::scale_down: return "scale_0.8";
    case Augmentation::scale_up: return "scale_1.2";
    case Augmentation::flip_x: return "flip_x";
    case Augmentation::flip_y: return "flip_y";
  }
  return "unknown";
}

double scale_factor(Augmentation a) {
  if (a == Augmentation::scale_down) return 0.8;
  if (a == Augmentation::scale_up) return 1.2;
  return 1.0;
}

Augmentation draw_augmentation(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dist(0, 4);
  return static_cast<Augmentation>(dist(rng));
}

namespace {

double center(std::size_t n) { return (static_cast<double>(n) - 1.0) / 2.0; }

template <typename V>
V flip_impl(const V& in, Augmentation axis) {
  if (axis != Augmentation::flip_x && axis != Augmentation::flip_y) {
    throw ValueError("flip expects flip_x or flip_y, got " + to_string(axis));
  }
  V out = in;
  const auto& e = in.extents;
  for (std::size_t d = 0; d < e.d; ++d) {
    for (std::size_t h = 0; h < e.h; ++h) {
      for (std::size_t w = 0; w < e.w; ++w) {
        if (axis == Augmentation::flip_x) {
          out.at(d, h, w) = in.at(d, h, e.w - 1 - w);
        } else {
          out.at(d, h, w) = in.at(d, e.h - 1 - h, w);
        }
      }
    }
  }
  return out;
}

void check_factor(double factor) {
  if (!(factor > 0) || !std::isfinite(factor)) throw ValueError("scale factor must be positive and finite");
}

}  // namespace

Volume scale_in_plane(const Volume& volume, double factor) {
  check_factor(factor);
  const auto& e = volume.extents;
  Volume out = volume;
  const double ch = center(e.h);
  const double cw = center(e.w);
  auto clamp_index = [](double x, std::size_t n) {
    return std::min(std::max(x, 0.0), static_cast<double>(n - 1));
  };
  for (std::size_t h = 0; h < e.h; ++h) {
    const double sh = clamp_index(ch + (static_cast<double>(h) - ch) / factor, e.h);
    const auto h0 = static_cast<std::size_t>(std::floor(sh));
    const std::size_t h1 = std::min(h0 + 1, e.h - 1);
    const double fh = sh - static_cast<double>(h0);
    for (std::size_t w = 0; w < e.w; ++w) {
      const double sw = clamp_index(cw + (static_cast<double>(w) - cw) / factor, e.w);
      const auto w0 = static_cast<std::size_t>(std::floor(sw));
      const std::size_t w1 = std::min(w0 + 1, e.w - 1);
      const double fw = sw - static_cast<double>(w0);
      for (std::size_t d = 0; d < e.d; ++d) {
        const double top = volume.at(d, h0, w0) + fw * (volume.at(d, h0, w1) - volume.at(d, h0, w0));
        const double bot = volume.at(d, h1, w0) + fw * (volume.at(d, h1, w1) - volume.at(d, h1, w0));
        out.at(d, h, w) = static_cast<float>(top + fh * (bot - top));
      }
    }
  }
  return out;
}

LabelVolume scale_in_plane(const LabelVolume& labels, double factor) {
  check_factor(factor);
  const auto& e = labels.extents;
  LabelVolume out = LabelVolume::zeros(e);
  const double ch = center(e.h);
  const double cw = center(e.w);
  for (std::size_t h = 0; h < e.h; ++h) {
    const double sh = std::round(ch + (static_cast<double>(h) - ch) / factor);
    if (sh < 0 || sh > static_cast<double>(e.h - 1)) continue;
    for (std::size_t w = 0; w < e.w; ++w) {
      const double sw = std::round(cw + (static_cast<double>(w) - cw) / factor);
      if (sw < 0 || sw > static_cast<double>(e.w - 1)) continue;
      for (std::size_t d = 0; d < e.d; ++d) {
        out.at(d, h, w) = labels.at(d, static_cast<std::size_t>(sh), static_cast<std::size_t>(sw));
      }
    }
  }
  return out;
}

Volume flip(const Volume& volume, Augmentation axis) { return flip_impl(volume, axis); }
LabelVolume flip(const LabelVolume& labels, Augmentation axis) { return flip_impl(labels, axis); }

SequenceSample apply_augmentation(const SequenceSample& sample, Augmentation a) {
  if (a == Augmentation::identity) return sample;
  SequenceSample out = sample;
  const bool scaling = a == Augmentation::scale_down || a == Augmentation::scale_up;
  for (auto& frame : out.frames) frame = scaling ? scale_in_plane(frame, scale_factor(a)) : flip(frame, a);
  for (auto& label : out.labels) {
    if (label) *label = scaling ? scale_in_plane(*label, scale_factor(a)) : flip(*label, a);
  }
  return out;
}

SequenceSample augment(const SequenceSample& sample, std::mt19937_64& rng) {
  return apply_augmentation(sample, draw_augmentation(rng));
}

}  // namespace cardioseq
