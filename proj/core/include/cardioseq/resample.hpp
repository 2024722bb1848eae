#pragma once

#include "cardioseq/volume.hpp"

namespace cardioseq {

/// Default in-network grid: 96 x 96 in-plane, 24 slices.
inline constexpr Dims3 kDefaultResampleExtents{24, 96, 96};

/// Trilinear interpolation on a corner-aligned grid: output index i along an
/// axis samples source coordinate i * (n_in - 1) / (n_out - 1). Spacing is
/// scaled by n_in / n_out. Axes with a single voxel are only accepted when
/// the target keeps them at one voxel.
Volume resample_linear(const Volume& volume, const Dims3& target);

/// Nearest-neighbour counterpart for label volumes on the same grid.
LabelVolume resample_nearest(const LabelVolume& labels, const Dims3& target);

/// Per-volume z-score; constant volumes map to all zeros.
Volume normalize_intensity(const Volume& volume);

}  // namespace cardioseq
