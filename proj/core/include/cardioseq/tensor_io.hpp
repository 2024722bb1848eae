#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <variant>
#include <vector>

#include "cardioseq/tensor.hpp"

namespace cardioseq {

/// Precision tag stored in raw tensor files.
enum class Precision : std::uint8_t { u8 = 1, f32 = 4, f64 = 8 };

/// Decoded raw tensor: "CSTN", u32 version, u32 rank, u64 extents,
/// u8 precision tag, little-endian C-contiguous buffer.
struct RawTensor {
  Shape shape;
  std::variant<std::vector<std::uint8_t>, std::vector<float>, std::vector<double>> data;

  Precision precision() const;
};

inline constexpr std::uint32_t kRawTensorVersion = 1;

void write_raw_tensor(std::ostream& out, const Shape& shape, std::span<const float> values);
void write_raw_tensor(std::ostream& out, const Shape& shape, std::span<const double> values);
void write_raw_tensor(std::ostream& out, const Shape& shape, std::span<const std::uint8_t> values);

/// Throws DataError on bad magic, unknown version or precision, and truncation.
RawTensor read_raw_tensor(std::istream& in);

/// Converts a decoded floating-point raw tensor to the requested precision.
template <typename T>
Tensor<T> to_tensor(const RawTensor& raw, bool requires_grad = false);

template <typename T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& tensor);
template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path);

namespace le {

void put_u8(std::ostream& out, std::uint8_t v);
void put_u32(std::ostream& out, std::uint32_t v);
void put_u64(std::ostream& out, std::uint64_t v);
std::uint8_t get_u8(std::istream& in);
std::uint32_t get_u32(std::istream& in);
std::uint64_t get_u64(std::istream& in);

}  // namespace le

}  // namespace cardioseq
