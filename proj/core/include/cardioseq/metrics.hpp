#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cardioseq/volume.hpp"

namespace cardioseq {

namespace detail {

struct OverlapCounts {
  std::uint64_t inter = 0;
  std::uint64_t p = 0;
  std::uint64_t t = 0;
};

[[noreturn]] void throw_mask_size_mismatch(std::size_t p, std::size_t t);
[[noreturn]] void throw_non_binary_mask(std::span<const std::uint8_t> p, std::span<const std::uint8_t> t);

/// Intersection and mask sizes, eight voxels per step: for bytes in {0, 1}
/// the top byte of x * 0x0101...01 is their sum. Any byte above 1 leaves a
/// bit outside the low bit of some byte and the masks are rejected.
inline OverlapCounts overlap_counts(std::span<const std::uint8_t> p, std::span<const std::uint8_t> t) {
  if (p.size() != t.size()) throw_mask_size_mismatch(p.size(), t.size());
  constexpr std::uint64_t kOnes = 0x0101010101010101ULL;
  OverlapCounts c;
  std::uint64_t seen = 0;
  const auto accumulate = [&](std::uint64_t a, std::uint64_t b) {
    seen |= a | b;
    c.inter += ((a & b) * kOnes) >> 56;
    c.p += (a * kOnes) >> 56;
    c.t += (b * kOnes) >> 56;
  };
  std::size_t i = 0;
  for (; i + 8 <= p.size(); i += 8) {
    std::uint64_t a, b;
    std::memcpy(&a, p.data() + i, 8);
    std::memcpy(&b, t.data() + i, 8);
    accumulate(a, b);
  }
  if (i < p.size()) {
    std::uint64_t a = 0, b = 0;
    for (std::size_t k = 0; i + k < p.size(); ++k) {
      a |= std::uint64_t{p[i + k]} << (8 * k);
      b |= std::uint64_t{t[i + k]} << (8 * k);
    }
    accumulate(a, b);
  }
  if ((seen & ~kOnes) != 0) throw_non_binary_mask(p, t);
  return c;
}

}  // namespace detail

/// 2|P and T| / (|P| + |T|) over binary masks. Two empty masks score 1.
inline double dice(std::span<const std::uint8_t> p, std::span<const std::uint8_t> t) {
  const auto c = detail::overlap_counts(p, t);
  if (c.p + c.t == 0) return 1.0;
  return 2.0 * static_cast<double>(c.inter) / static_cast<double>(c.p + c.t);
}

/// |P and T| / |P or T|. Two empty masks score 1.
inline double iou(std::span<const std::uint8_t> p, std::span<const std::uint8_t> t) {
  const auto c = detail::overlap_counts(p, t);
  const std::uint64_t uni = c.p + c.t - c.inter;
  if (uni == 0) return 1.0;
  return static_cast<double>(c.inter) / static_cast<double>(uni);
}

/// Mask of voxels whose label equals `cls`.
std::vector<std::uint8_t> class_mask(const LabelVolume& labels, std::uint8_t cls);
/// Mask of voxels with any non-background label.
std::vector<std::uint8_t> foreground_mask(const LabelVolume& labels);

enum class OverallIou { foreground_union, mean_per_class };

enum class Phase { ed, es };

inline constexpr std::array<std::uint8_t, 3> kReportedClasses{1, 2, 3};  // LV, RV, MYO
std::string class_name(std::uint8_t cls);
std::string to_string(Phase phase);

struct ClassScore {
  double dice = 0;
  double iou = 0;
};

struct MetricsReport {
  std::string patient;
  /// scores[phase][c] for phase ED(0)/ES(1) and c indexing kReportedClasses.
  std::array<std::array<ClassScore, 3>, 2> scores{};
  OverallIou overall_mode = OverallIou::foreground_union;
  /// Overall IoU averaged over the ED and ES frames.
  double overall_iou = 0;
  /// Dice between predicted foreground masks of frames t and t+1.
  std::vector<double> consistency;

  const ClassScore& score(Phase phase, std::uint8_t cls) const;
  /// Mean of the six per-class, per-phase Dice values.
  double mean_dice() const;
  double mean_consistency() const;
};

/// Scores predictions against ground truth at the ED and ES frames and
/// computes the consistency series over all predicted frames.
MetricsReport evaluate_sequence(std::span<const LabelVolume> pred, std::span<const LabelVolume> gt,
                                std::size_t ed_index, std::size_t es_index,
                                OverallIou overall = OverallIou::foreground_union);

/// Mean foreground Dice over every frame that has ground truth: the average
/// over frames and the three classes of per-class Dice.
double mean_foreground_dice(std::span<const LabelVolume> pred, std::span<const LabelVolume> gt);

inline constexpr const char* kReportCsvHeader = "patient,phase,class,dice,iou";

/// Header line then six rows per report.
void write_report_csv(std::span<const MetricsReport> reports, std::ostream& out);
/// One JSON object per adjacent frame pair: {"patient","t","dice"}.
void write_consistency_jsonl(std::span<const MetricsReport> reports, std::ostream& out);

}  // namespace cardioseq
