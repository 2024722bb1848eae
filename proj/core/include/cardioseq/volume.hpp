#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cardioseq/tensor.hpp"

namespace cardioseq {

/// Single-channel intensity volume, C-contiguous in (depth, height, width)
/// order: NIfTI x maps to width, y to height and z to depth.
struct Volume {
  Dims3 extents;
  std::vector<float> data;
  /// Millimetres per voxel along (depth, height, width).
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::array<double, 3> origin{0.0, 0.0, 0.0};

  static Volume zeros(const Dims3& extents);

  float& at(std::size_t d, std::size_t h, std::size_t w) { return data[(d * extents.h + h) * extents.w + w]; }
  float at(std::size_t d, std::size_t h, std::size_t w) const { return data[(d * extents.h + h) * extents.w + w]; }

  /// Throws when the buffer size, spacing, or values are invalid.
  void validate() const;
};

/// Per-voxel class labels: 0 background, 1 LV, 2 RV, 3 MYO.
struct LabelVolume {
  Dims3 extents;
  std::vector<std::uint8_t> data;

  static LabelVolume zeros(const Dims3& extents);

  std::uint8_t& at(std::size_t d, std::size_t h, std::size_t w) { return data[(d * extents.h + h) * extents.w + w]; }
  std::uint8_t at(std::size_t d, std::size_t h, std::size_t w) const {
    return data[(d * extents.h + h) * extents.w + w];
  }

  /// Rejects values above 3 and buffer/extent mismatches.
  void validate() const;
};

/// Ordered frames of one cardiac cycle. `labels` is either empty or holds
/// one (possibly absent) label volume per frame.
struct SequenceSample {
  std::string patient_id;
  std::vector<Volume> frames;
  std::vector<std::optional<LabelVolume>> labels;
  std::size_t ed_index = 0;
  std::size_t es_index = 0;

  std::size_t length() const { return frames.size(); }
  bool has_any_label() const;
  Dims3 extents() const { return frames.at(0).extents; }

  void validate() const;
};

}  // namespace cardioseq
