#pragma once

#include <cstdint>
#include <random>

#include "cardioseq/volume.hpp"

namespace cardioseq {

/// Beating short-axis phantom. Lengths are in voxels, the center in voxel
/// coordinates (negative selects the in-plane grid center). At frame t every
/// radius is multiplied by s_t = 1 - amplitude * (1 - cos(2 pi t / T)) / 2.
struct PhantomConfig {
  std::size_t frames = 8;
  Dims3 extents{8, 32, 32};
  double center_h = -1;
  double center_w = -1;
  double lv_radius = 5.0;
  double myo_thickness = 2.5;
  double rv_radius = 7.0;
  /// Distance from the LV center to the RV disk center, along +width.
  double rv_offset = 6.5;
  /// Relative radius reduction from base (slice 0) to apex (last slice).
  double apex_taper = 0.25;
  double amplitude = 0.3;
  double noise_std = 0.05;
  /// Base intensities for background, LV, RV and MYO.
  std::array<double, 4> intensity{0.0, 1.0, 0.8, 0.35};
  std::uint64_t seed = 0;

  /// Geometry scaled to the in-plane size of `extents`.
  static PhantomConfig for_grid(std::size_t frames, const Dims3& extents, std::uint64_t seed = 0);

  /// Copy with per-patient jitter on center, radii and amplitude drawn from `rng`.
  PhantomConfig jittered(std::mt19937_64& rng) const;

  void validate() const;
};

/// s_t for frame t.
double contraction_scale(const PhantomConfig& config, std::size_t t);

SequenceSample generate_phantom_sequence(const PhantomConfig& config);

}  // namespace cardioseq
