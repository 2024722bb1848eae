#pragma once

#include <filesystem>
#include <string>

#include "cardioseq/error.hpp"
#include "cardioseq/volume.hpp"

namespace cardioseq {

enum class NiftiErrorKind {
  io,
  header_size,
  bad_magic,
  unsupported_datatype,
  bad_dimensionality,
  truncated,
};

class NiftiError : public DataError {
 public:
  NiftiError(NiftiErrorKind kind, const std::string& message) : DataError(message), kind_(kind) {}
  NiftiErrorKind kind() const { return kind_; }

 private:
  NiftiErrorKind kind_;
};

/// Reads an uncompressed single-volume NIfTI-1 file (`n+1` single file or
/// `ni1` header with a sibling `.img`). Either byte order is accepted; the
/// order is detected from sizeof_hdr. Supported datatypes: uint8 (2),
/// int16 (4), float32 (16). scl_slope/scl_inter are applied when the slope
/// is non-zero.
Volume read_nifti(const std::filesystem::path& path);

/// Reads a label volume; values are rounded and must lie in {0,1,2,3}.
LabelVolume read_label_nifti(const std::filesystem::path& path);

/// Writes little-endian float32 NIfTI-1, magic "n+1", vox_offset 352.
void write_nifti(const Volume& volume, const std::filesystem::path& path);

/// Writes a label volume as little-endian uint8 NIfTI-1.
void write_label_nifti(const LabelVolume& labels, const std::filesystem::path& path,
                       const std::array<double, 3>& spacing = {1.0, 1.0, 1.0});

}  // namespace cardioseq
