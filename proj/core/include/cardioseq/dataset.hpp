#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cardioseq/volume.hpp"

namespace cardioseq {

/// Writes one patient as `<dir>/frameTT.nii`, `frameTT_gt.nii` and
/// `meta.txt` (`ed=`, `es=`, `T=` lines). TT is the zero-based frame index,
/// zero-padded to two digits.
void write_patient(const SequenceSample& sample, const std::filesystem::path& dir);

/// Reads a patient directory in either the phantom layout above or the ACDC
/// layout (`Info.cfg` with one-based `ED:`/`ES:` entries and per-frame
/// `patientXXX_frameYY[_gt].nii` files; frames are ordered by YY).
SequenceSample read_patient(const std::filesystem::path& dir);

/// Sorted names of the patient subdirectories under `root`.
std::vector<std::string> list_patients(const std::filesystem::path& root);

/// Resamples frames (linear) and labels (nearest) to `target`, then z-scores
/// every frame when `normalize` is set.
SequenceSample preprocess(const SequenceSample& sample, const Dims3& target, bool normalize = true);

struct PatientSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

/// Seeded shuffle, then floor(0.7 n) / floor(0.2 n) / remainder. Needs n >= 10.
PatientSplit split_patients(const std::vector<std::string>& ids, std::uint64_t seed);

}  // namespace cardioseq
