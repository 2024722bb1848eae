#include "cardioseq/nifti.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace cardioseq {

namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kSingleFileOffset = 352;

// Header field offsets.
constexpr std::size_t kDim = 40;
constexpr std::size_t kDatatype = 70;
constexpr std::size_t kBitpix = 72;
constexpr std::size_t kPixdim = 76;
constexpr std::size_t kVoxOffset = 108;
constexpr std::size_t kSclSlope = 112;
constexpr std::size_t kSclInter = 116;
constexpr std::size_t kXyztUnits = 123;
constexpr std::size_t kQformCode = 252;
constexpr std::size_t kQoffset = 268;
constexpr std::size_t kMagic = 344;

constexpr std::int16_t kDtUint8 = 2;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtFloat32 = 16;

std::uint32_t swap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xFF00u) | ((v << 8) & 0xFF0000u) | (v << 24);
}

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NiftiError(NiftiErrorKind::io, "cannot open NIfTI file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class HeaderReader {
 public:
  HeaderReader(const unsigned char* bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <typename U>
  U get(std::size_t offset) const {
    unsigned char tmp[sizeof(U)];
    std::memcpy(tmp, bytes_ + offset, sizeof(U));
    if (swap_) std::reverse(tmp, tmp + sizeof(U));
    U v;
    std::memcpy(&v, tmp, sizeof(U));
    return v;
  }

 private:
  const unsigned char* bytes_;
  bool swap_;
};

struct Header {
  std::int16_t dim[8];
  std::int16_t datatype;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  float qoffset[3];
  bool swapped;
  bool single_file;
};

Header parse_header(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  if (bytes.size() < kHeaderSize) {
    throw NiftiError(NiftiErrorKind::truncated, path.string() + ": file shorter than the 348-byte NIfTI-1 header");
  }
  std::int32_t sizeof_hdr;
  std::memcpy(&sizeof_hdr, bytes.data(), 4);
  Header h{};
  if (sizeof_hdr == static_cast<std::int32_t>(kHeaderSize)) {
    h.swapped = false;
  } else if (swap32(static_cast<std::uint32_t>(sizeof_hdr)) == kHeaderSize) {
    h.swapped = true;
  } else {
    throw NiftiError(NiftiErrorKind::header_size,
                     path.string() + ": sizeof_hdr is " + std::to_string(sizeof_hdr) + " in either byte order, not 348");
  }
  const char* magic = reinterpret_cast<const char*>(bytes.data() + kMagic);
  if (std::memcmp(magic, "n+1\0", 4) == 0) {
    h.single_file = true;
  } else if (std::memcmp(magic, "ni1\0", 4) == 0) {
    h.single_file = false;
  } else {
    throw NiftiError(NiftiErrorKind::bad_magic, path.string() + ": bad NIfTI-1 magic (expected \"n+1\" or \"ni1\")");
  }
  HeaderReader r(bytes.data(), h.swapped);
  for (int i = 0; i < 8; ++i) h.dim[i] = r.get<std::int16_t>(kDim + 2 * i);
  h.datatype = r.get<std::int16_t>(kDatatype);
  for (int i = 0; i < 8; ++i) h.pixdim[i] = r.get<float>(kPixdim + 4 * i);
  h.vox_offset = r.get<float>(kVoxOffset);
  h.scl_slope = r.get<float>(kSclSlope);
  h.scl_inter = r.get<float>(kSclInter);
  for (int i = 0; i < 3; ++i) h.qoffset[i] = r.get<float>(kQoffset + 4 * i);

  if (h.dim[0] != 3 && h.dim[0] != 4) {
    throw NiftiError(NiftiErrorKind::bad_dimensionality,
                     path.string() + ": dim[0] = " + std::to_string(h.dim[0]) + ", only 3D volumes are supported");
  }
  for (int i = 1; i <= h.dim[0]; ++i) {
    if (h.dim[i] < 1) {
      throw NiftiError(NiftiErrorKind::bad_dimensionality,
                       path.string() + ": dim[" + std::to_string(i) + "] = " + std::to_string(h.dim[i]));
    }
  }
  if (h.dim[0] == 4 && h.dim[4] != 1) {
    throw NiftiError(NiftiErrorKind::bad_dimensionality,
                     path.string() + ": 4D file with " + std::to_string(h.dim[4]) +
                         " volumes; split the time axis into per-frame files");
  }
  if (h.datatype != kDtUint8 && h.datatype != kDtInt16 && h.datatype != kDtFloat32) {
    throw NiftiError(NiftiErrorKind::unsupported_datatype,
                     path.string() + ": unsupported datatype code " + std::to_string(h.datatype) +
                         " (supported: 2 uint8, 4 int16, 16 float32)");
  }
  return h;
}

std::size_t datatype_size(std::int16_t dt) {
  switch (dt) {
    case kDtUint8: return 1;
    case kDtInt16: return 2;
    default: return 4;
  }
}

Volume decode(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  const Header h = parse_header(bytes, path);
  const Dims3 extents{static_cast<std::size_t>(h.dim[3]), static_cast<std::size_t>(h.dim[2]),
                      static_cast<std::size_t>(h.dim[1])};
  const std::size_t n = extents.product();
  const std::size_t elem = datatype_size(h.datatype);

  std::vector<unsigned char> sibling;
  const std::vector<unsigned char>* payload = &bytes;
  std::size_t offset = static_cast<std::size_t>(h.vox_offset);
  if (h.single_file) {
    if (offset < kHeaderSize) offset = kSingleFileOffset;
  } else {
    auto img = path;
    img.replace_extension(".img");
    sibling = slurp(img);
    payload = &sibling;
  }
  if (payload->size() < offset + n * elem) {
    throw NiftiError(NiftiErrorKind::truncated, path.string() + ": payload truncated (need " +
                                                    std::to_string(n * elem) + " bytes after offset " +
                                                    std::to_string(offset) + ")");
  }

  Volume v;
  v.extents = extents;
  v.data.resize(n);
  HeaderReader r(payload->data() + offset, h.swapped);
  for (std::size_t i = 0; i < n; ++i) {
    switch (h.datatype) {
      case kDtUint8: v.data[i] = static_cast<float>((*payload)[offset + i]); break;
      case kDtInt16: v.data[i] = static_cast<float>(r.get<std::int16_t>(2 * i)); break;
      default: v.data[i] = r.get<float>(4 * i); break;
    }
  }
  if (h.scl_slope != 0.0f && std::isfinite(h.scl_slope)) {
    for (auto& x : v.data) x = x * h.scl_slope + h.scl_inter;
  }
  for (int i = 0; i < 3; ++i) {
    const float s = h.pixdim[3 - i];
    v.spacing[i] = (s > 0 && std::isfinite(s)) ? s : 1.0;
    v.origin[i] = h.qoffset[2 - i];
  }
  return v;
}

class HeaderWriter {
 public:
  HeaderWriter() : bytes_(kSingleFileOffset, 0) {}

  template <typename U>
  void put(std::size_t offset, U value) {
    std::memcpy(bytes_.data() + offset, &value, sizeof(U));  // little-endian host
  }
  std::vector<unsigned char>& bytes() { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

static_assert(std::endian::native == std::endian::little, "NIfTI writer assumes a little-endian host");

void write_file(const std::filesystem::path& path, const Dims3& e, const std::array<double, 3>& spacing,
                const std::array<double, 3>& origin, std::int16_t datatype, const void* data, std::size_t bytes) {
  for (auto x : {e.d, e.h, e.w}) {
    if (x > 32767) throw DataError("extent " + std::to_string(x) + " does not fit a NIfTI-1 header");
  }
  HeaderWriter w;
  w.put<std::int32_t>(0, static_cast<std::int32_t>(kHeaderSize));
  const std::int16_t dim[8] = {3, static_cast<std::int16_t>(e.w), static_cast<std::int16_t>(e.h),
                               static_cast<std::int16_t>(e.d), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) w.put<std::int16_t>(kDim + 2 * i, dim[i]);
  w.put<std::int16_t>(kDatatype, datatype);
  w.put<std::int16_t>(kBitpix, static_cast<std::int16_t>(datatype == kDtUint8 ? 8 : 32));
  const float pixdim[8] = {1.0f, static_cast<float>(spacing[2]), static_cast<float>(spacing[1]),
                           static_cast<float>(spacing[0]), 1.0f, 1.0f, 1.0f, 1.0f};
  for (int i = 0; i < 8; ++i) w.put<float>(kPixdim + 4 * i, pixdim[i]);
  w.put<float>(kVoxOffset, static_cast<float>(kSingleFileOffset));
  w.put<float>(kSclSlope, 1.0f);
  w.put<float>(kSclInter, 0.0f);
  w.put<std::uint8_t>(kXyztUnits, 2);  // millimetres
  w.put<std::int16_t>(kQformCode, 1);
  for (int i = 0; i < 3; ++i) w.put<float>(kQoffset + 4 * i, static_cast<float>(origin[2 - i]));
  std::memcpy(w.bytes().data() + kMagic, "n+1\0", 4);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw NiftiError(NiftiErrorKind::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw NiftiError(NiftiErrorKind::io, "write failed for " + path.string());
}

}  // namespace

Volume read_nifti(const std::filesystem::path& path) {
  Volume v = decode(path);
  v.validate();
  return v;
}

LabelVolume read_label_nifti(const std::filesystem::path& path) {
  const Volume v = decode(path);
  LabelVolume labels = LabelVolume::zeros(v.extents);
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    const float r = std::round(v.data[i]);
    if (!(r >= 0.0f && r <= 3.0f)) {
      throw DataError(path.string() + ": label value " + std::to_string(v.data[i]) + " outside {0,1,2,3}");
    }
    labels.data[i] = static_cast<std::uint8_t>(r);
  }
  return labels;
}

void write_nifti(const Volume& volume, const std::filesystem::path& path) {
  volume.validate();
  write_file(path, volume.extents, volume.spacing, volume.origin, kDtFloat32, volume.data.data(),
             volume.data.size() * sizeof(float));
}

void write_label_nifti(const LabelVolume& labels, const std::filesystem::path& path,
                       const std::array<double, 3>& spacing) {
  labels.validate();
  write_file(path, labels.extents, spacing, {0.0, 0.0, 0.0}, kDtUint8, labels.data.data(), labels.data.size());
}

}  // namespace cardioseq
