#include "cardioseq/volume.hpp"

#include <cmath>

namespace cardioseq {

Volume Volume::zeros(const Dims3& extents) {
  Volume v;
  v.extents = extents;
  v.data.assign(extents.product(), 0.0f);
  return v;
}

void Volume::validate() const {
  if (extents.product() == 0) throw DataError("volume extents must be >= 1, got " + to_string(extents));
  if (data.size() != extents.product()) {
    throw DataError("volume buffer holds " + std::to_string(data.size()) + " values for extents " +
                    to_string(extents));
  }
  for (double s : spacing) {
    if (!(s > 0) || !std::isfinite(s)) throw DataError("volume spacing must be positive and finite");
  }
  for (float v : data) {
    if (!std::isfinite(v)) throw DataError("volume contains non-finite intensities");
  }
}

LabelVolume LabelVolume::zeros(const Dims3& extents) {
  LabelVolume v;
  v.extents = extents;
  v.data.assign(extents.product(), 0);
  return v;
}

void LabelVolume::validate() const {
  if (data.size() != extents.product()) {
    throw DataError("label buffer holds " + std::to_string(data.size()) + " values for extents " +
                    to_string(extents));
  }
  for (auto v : data) {
    if (v > 3) throw ValueError("label value " + std::to_string(v) + " outside {0,1,2,3}");
  }
}

bool SequenceSample::has_any_label() const {
  for (const auto& l : labels) {
    if (l) return true;
  }
  return false;
}

void SequenceSample::validate() const {
  if (frames.empty()) throw DataError("sequence '" + patient_id + "' has no frames");
  const Dims3 e = frames.front().extents;
  for (const auto& f : frames) {
    f.validate();
    if (f.extents != e) throw DataError("sequence '" + patient_id + "' mixes frame extents");
  }
  if (!labels.empty()) {
    if (labels.size() != frames.size()) {
      throw DataError("sequence '" + patient_id + "' has " + std::to_string(labels.size()) + " label slots for " +
                      std::to_string(frames.size()) + " frames");
    }
    for (const auto& l : labels) {
      if (!l) continue;
      l->validate();
      if (l->extents != e) throw DataError("sequence '" + patient_id + "' label extents differ from frames");
    }
  }
  if (ed_index >= frames.size() || es_index >= frames.size()) {
    throw DataError("sequence '" + patient_id + "' ED/ES index out of range");
  }
  if (frames.size() > 1 && ed_index == es_index) {
    throw DataError("sequence '" + patient_id + "' has identical ED and ES indices");
  }
}

}  // namespace cardioseq
