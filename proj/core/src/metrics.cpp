#include "cardioseq/metrics.hpp"

#include "json.hpp"
#include <algorithm>
#include <ostream>

#include "cardioseq/error.hpp"

namespace cardioseq {

namespace {

void check_same(const LabelVolume& a, const LabelVolume& b) {
  if (!(a.extents == b.extents)) {
    throw ShapeError("label volumes differ in extents: " + to_string(a.extents) + " vs " + to_string(b.extents));
  }
}

}  // namespace

namespace detail {

void throw_mask_size_mismatch(std::size_t p, std::size_t t) {
  throw ShapeError("mask sizes differ: " + std::to_string(p) + " vs " + std::to_string(t));
}

void throw_non_binary_mask(std::span<const std::uint8_t> p, std::span<const std::uint8_t> t) {
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] > 1 || t[k] > 1) {
      throw ValueError("masks must be binary, found value " + std::to_string(std::max(p[k], t[k])));
    }
  }
  throw ValueError("masks must be binary");
}

}  // namespace detail

std::vector<std::uint8_t> class_mask(const LabelVolume& labels, std::uint8_t cls) {
  std::vector<std::uint8_t> m(labels.data.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = labels.data[i] == cls;
  return m;
}

std::vector<std::uint8_t> foreground_mask(const LabelVolume& labels) {
  std::vector<std::uint8_t> m(labels.data.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = labels.data[i] != 0;
  return m;
}

std::string class_name(std::uint8_t cls) {
  switch (cls) {
    case 0: return "BG";
    case 1: return "LV";
    case 2: return "RV";
    case 3: return "MYO";
    default: throw ValueError("no class " + std::to_string(cls));
  }
}

std::string to_string(Phase phase) { return phase == Phase::ed ? "ED" : "ES"; }

const ClassScore& MetricsReport::score(Phase phase, std::uint8_t cls) const {
  if (cls < 1 || cls > 3) throw ValueError("reported classes are 1..3, got " + std::to_string(cls));
  return scores[phase == Phase::ed ? 0 : 1][cls - 1];
}

double MetricsReport::mean_dice() const {
  double s = 0;
  for (const auto& phase : scores)
    for (const auto& c : phase) s += c.dice;
  return s / 6.0;
}

double MetricsReport::mean_consistency() const {
  if (consistency.empty()) return 1.0;
  double s = 0;
  for (double v : consistency) s += v;
  return s / static_cast<double>(consistency.size());
}

MetricsReport evaluate_sequence(std::span<const LabelVolume> pred, std::span<const LabelVolume> gt,
                                std::size_t ed_index, std::size_t es_index, OverallIou overall) {
  if (pred.empty()) throw ValueError("no predicted frames");
  if (ed_index >= pred.size() || es_index >= pred.size()) {
    throw ValueError("phase index out of range: ed=" + std::to_string(ed_index) + " es=" + std::to_string(es_index) +
                     " for " + std::to_string(pred.size()) + " frames");
  }
  if (gt.size() != pred.size()) {
    throw ShapeError("prediction has " + std::to_string(pred.size()) + " frames, ground truth " +
                     std::to_string(gt.size()));
  }
  MetricsReport r;
  r.overall_mode = overall;
  const std::array<std::size_t, 2> frames{ed_index, es_index};
  double overall_sum = 0;
  for (std::size_t ph = 0; ph < 2; ++ph) {
    const auto& p = pred[frames[ph]];
    const auto& t = gt[frames[ph]];
    check_same(p, t);
    double class_iou_sum = 0;
    for (std::size_t c = 0; c < kReportedClasses.size(); ++c) {
      const auto pm = class_mask(p, kReportedClasses[c]);
      const auto tm = class_mask(t, kReportedClasses[c]);
      r.scores[ph][c] = {dice(pm, tm), iou(pm, tm)};
      class_iou_sum += r.scores[ph][c].iou;
    }
    overall_sum += overall == OverallIou::foreground_union ? iou(foreground_mask(p), foreground_mask(t))
                                                           : class_iou_sum / 3.0;
  }
  r.overall_iou = overall_sum / 2.0;
  for (std::size_t t = 0; t + 1 < pred.size(); ++t) {
    check_same(pred[t], pred[t + 1]);
    r.consistency.push_back(dice(foreground_mask(pred[t]), foreground_mask(pred[t + 1])));
  }
  return r;
}

double mean_foreground_dice(std::span<const LabelVolume> pred, std::span<const LabelVolume> gt) {
  if (pred.size() != gt.size() || pred.empty()) throw ShapeError("prediction and ground truth frame counts differ");
  double s = 0;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    check_same(pred[f], gt[f]);
    for (auto cls : kReportedClasses) s += dice(class_mask(pred[f], cls), class_mask(gt[f], cls));
  }
  return s / static_cast<double>(pred.size() * kReportedClasses.size());
}

void write_report_csv(std::span<const MetricsReport> reports, std::ostream& out) {
  out << kReportCsvHeader << "\n";
  out.precision(17);
  for (const auto& r : reports) {
    for (Phase ph : {Phase::ed, Phase::es}) {
      for (auto cls : kReportedClasses) {
        const auto& s = r.score(ph, cls);
        out << r.patient << "," << to_string(ph) << "," << class_name(cls) << "," << s.dice << "," << s.iou << "\n";
      }
    }
  }
}

void write_consistency_jsonl(std::span<const MetricsReport> reports, std::ostream& out) {
  for (const auto& r : reports) {
    for (std::size_t t = 0; t < r.consistency.size(); ++t) {
      out << nlohmann::json{{"patient", r.patient}, {"t", t}, {"dice", r.consistency[t]}}.dump() << "\n";
    }
  }
}

}  // namespace cardioseq
