#include "cardioseq/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace cardioseq {

namespace le {

namespace {

template <typename U>
void put(std::ostream& out, U v) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(U));
}

template <typename U>
U get(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw DataError("raw tensor stream truncated");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void put_u8(std::ostream& out, std::uint8_t v) { put(out, v); }
void put_u32(std::ostream& out, std::uint32_t v) { put(out, v); }
void put_u64(std::ostream& out, std::uint64_t v) { put(out, v); }
std::uint8_t get_u8(std::istream& in) { return get<std::uint8_t>(in); }
std::uint32_t get_u32(std::istream& in) { return get<std::uint32_t>(in); }
std::uint64_t get_u64(std::istream& in) { return get<std::uint64_t>(in); }

}  // namespace le

namespace {

constexpr char kMagic[4] = {'C', 'S', 'T', 'N'};

void write_header(std::ostream& out, const Shape& shape, std::size_t count, Precision p) {
  if (numel(shape) != count) throw ShapeError("raw tensor buffer does not match shape " + to_string(shape));
  out.write(kMagic, 4);
  le::put_u32(out, kRawTensorVersion);
  le::put_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (auto e : shape) le::put_u64(out, e);
  le::put_u8(out, static_cast<std::uint8_t>(p));
}

template <typename F, typename U>
void write_values(std::ostream& out, std::span<const F> values) {
  for (F v : values) {
    if constexpr (sizeof(U) == 4) {
      le::put_u32(out, std::bit_cast<U>(v));
    } else {
      le::put_u64(out, std::bit_cast<U>(v));
    }
  }
}

template <typename F, typename U>
std::vector<F> read_values(std::istream& in, std::size_t n) {
  std::vector<unsigned char> bytes(n * sizeof(F));
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw DataError("raw tensor payload truncated");
  }
  std::vector<F> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    U u = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b) u |= static_cast<U>(bytes[i * sizeof(U) + b]) << (8 * b);
    values[i] = std::bit_cast<F>(u);
  }
  return values;
}

}  // namespace

Precision RawTensor::precision() const {
  switch (data.index()) {
    case 0: return Precision::u8;
    case 1: return Precision::f32;
    default: return Precision::f64;
  }
}

void write_raw_tensor(std::ostream& out, const Shape& shape, std::span<const float> values) {
  write_header(out, shape, values.size(), Precision::f32);
  write_values<float, std::uint32_t>(out, values);
}

void write_raw_tensor(std::ostream& out, const Shape& shape, std::span<const double> values) {
  write_header(out, shape, values.size(), Precision::f64);
  write_values<double, std::uint64_t>(out, values);
}

void write_raw_tensor(std::ostream& out, const Shape& shape, std::span<const std::uint8_t> values) {
  write_header(out, shape, values.size(), Precision::u8);
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size()));
}

RawTensor read_raw_tensor(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4)) throw DataError("raw tensor stream truncated before magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw DataError("raw tensor has bad magic (expected CSTN)");
  const auto version = le::get_u32(in);
  if (version != kRawTensorVersion) throw DataError("unsupported raw tensor version " + std::to_string(version));
  const auto rank = le::get_u32(in);
  if (rank == 0 || rank > 8) throw DataError("raw tensor rank " + std::to_string(rank) + " out of range");
  RawTensor raw;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto e = le::get_u64(in);
    if (e == 0 || e > (1ULL << 32)) throw DataError("raw tensor extent " + std::to_string(e) + " out of range");
    raw.shape.push_back(static_cast<std::size_t>(e));
  }
  const std::size_t n = numel(raw.shape);
  const auto tag = le::get_u8(in);
  switch (static_cast<Precision>(tag)) {
    case Precision::u8: {
      std::vector<std::uint8_t> v(n);
      if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n))) {
        throw DataError("raw tensor payload truncated");
      }
      raw.data = std::move(v);
      break;
    }
    case Precision::f32: raw.data = read_values<float, std::uint32_t>(in, n); break;
    case Precision::f64: raw.data = read_values<double, std::uint64_t>(in, n); break;
    default: throw DataError("unknown raw tensor precision tag " + std::to_string(tag));
  }
  return raw;
}

template <typename T>
Tensor<T> to_tensor(const RawTensor& raw, bool requires_grad) {
  std::vector<T> values;
  std::visit([&](const auto& v) { values.assign(v.begin(), v.end()); }, raw.data);
  return Tensor<T>::from_data(raw.shape, std::move(values), requires_grad);
}

template <typename T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& tensor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_raw_tensor(out, tensor.shape(), tensor.data());
  if (!out) throw DataError("write failed for " + path.string());
}

template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return to_tensor<T>(read_raw_tensor(in));
}

template Tensor<float> to_tensor(const RawTensor&, bool);
template Tensor<double> to_tensor(const RawTensor&, bool);
template void save_tensor(const std::filesystem::path&, const Tensor<float>&);
template void save_tensor(const std::filesystem::path&, const Tensor<double>&);
template Tensor<float> load_tensor(const std::filesystem::path&);
template Tensor<double> load_tensor(const std::filesystem::path&);

}  // namespace cardioseq
