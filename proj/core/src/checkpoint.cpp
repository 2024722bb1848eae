#include "cardioseq/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "cardioseq/hash.hpp"

namespace cardioseq {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'C', 'K'};

void put_string(std::ostream& out, const std::string& s) {
  le::put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

// Bounds-checked reader over the checkpoint body.
class Reader {
 public:
  explicit Reader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string bytes(std::uint64_t n, const char* what) {
    need(n, what);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t position() const { return pos_; }

 private:
  void need(std::uint64_t n, const char* what) {
    if (n > end_ - pos_) {
      throw CheckpointError(CheckpointErrorKind::truncated,
                            std::string("checkpoint truncated while reading ") + what);
    }
  }
  const std::string& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

const RawTensor* find_entry(const Checkpoint& c, const std::string& name) {
  for (const auto& [n, t] : c.entries) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::vector<float> float_values(const RawTensor& raw, const std::string& name, const Shape& expected) {
  if (raw.shape != expected) {
    throw CheckpointError(CheckpointErrorKind::inventory, "checkpoint entry '" + name + "' has shape " +
                                                              to_string(raw.shape) + ", model expects " +
                                                              to_string(expected));
  }
  const auto* v = std::get_if<std::vector<float>>(&raw.data);
  if (!v) throw CheckpointError(CheckpointErrorKind::inventory, "checkpoint entry '" + name + "' is not float32");
  return *v;
}

}  // namespace

std::vector<std::string> Checkpoint::parameter_names() const {
  std::vector<std::string> names;
  for (const auto& e : entries) {
    if (e.first.rfind("adam.", 0) != 0) names.push_back(e.first);
  }
  return names;
}

Checkpoint make_checkpoint(const SegNet<float>& model, const Adam<float>* optimizer, std::uint64_t epoch) {
  Checkpoint c;
  c.config = model.config();
  c.epoch = epoch;
  const auto params = model.parameters();
  for (const auto& p : params) {
    c.entries.push_back({p.name, RawTensor{p.tensor.shape(), std::vector<float>(p.tensor.data().begin(),
                                                                               p.tensor.data().end())}});
  }
  if (optimizer) {
    c.adam_steps = optimizer->steps();
    for (const auto& p : params) {
      const auto it = optimizer->moments().find(p.name);
      if (it == optimizer->moments().end() || it->second.m.empty()) continue;
      c.entries.push_back({"adam.m/" + p.name, RawTensor{p.tensor.shape(), it->second.m}});
      c.entries.push_back({"adam.v/" + p.name, RawTensor{p.tensor.shape(), it->second.v}});
    }
  }
  return c;
}

void restore_checkpoint(const Checkpoint& checkpoint, const SegNet<float>& model, Adam<float>* optimizer) {
  if (checkpoint.config.digest() != model.config().digest()) {
    throw CheckpointError(CheckpointErrorKind::digest,
                          "checkpoint model configuration does not match the requested model:\n" +
                              checkpoint.config.serialize() + "vs\n" + model.config().serialize());
  }
  const auto params = model.parameters();
  for (const auto& p : params) {
    const RawTensor* raw = find_entry(checkpoint, p.name);
    if (!raw) throw CheckpointError(CheckpointErrorKind::inventory, "checkpoint lacks parameter '" + p.name + "'");
    const auto values = float_values(*raw, p.name, p.tensor.shape());
    auto t = p.tensor;
    std::copy(values.begin(), values.end(), t.mutable_data().begin());
  }
  if (optimizer) {
    optimizer->moments().clear();
    optimizer->set_steps(checkpoint.adam_steps);
    for (const auto& p : params) {
      const RawTensor* m = find_entry(checkpoint, "adam.m/" + p.name);
      const RawTensor* v = find_entry(checkpoint, "adam.v/" + p.name);
      if (!m || !v) continue;
      optimizer->moments()[p.name] = {float_values(*m, "adam.m/" + p.name, p.tensor.shape()),
                                      float_values(*v, "adam.v/" + p.name, p.tensor.shape())};
    }
  }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ostringstream body(std::ios::binary);
  body.write(kMagic, 4);
  le::put_u32(body, kCheckpointVersion);
  put_string(body, checkpoint.config.serialize());
  le::put_u64(body, checkpoint.config.digest());
  le::put_u64(body, checkpoint.epoch);
  le::put_u64(body, checkpoint.adam_steps);
  le::put_u64(body, checkpoint.entries.size());
  for (const auto& [name, raw] : checkpoint.entries) {
    put_string(body, name);
    std::ostringstream t(std::ios::binary);
    std::visit([&](const auto& v) { write_raw_tensor(t, raw.shape, std::span(v)); }, raw.data);
    put_string(body, t.str());
  }
  const std::string bytes = body.str();
  Fnv1a h;
  h.update(std::string_view(bytes));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointErrorKind::io, "cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  le::put_u64(out, h.digest());
  if (!out) throw CheckpointError(CheckpointErrorKind::io, "failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::io, "cannot open checkpoint " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw CheckpointError(CheckpointErrorKind::bad_magic, path.string() + " is not a checkpoint (magic CSCK expected)");
  }
  if (buf.size() < 8 + 8) throw CheckpointError(CheckpointErrorKind::truncated, "checkpoint truncated in header");
  Reader header(buf, buf.size());
  header.bytes(4, "magic");
  const std::uint32_t version = header.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointErrorKind::version, "unsupported checkpoint version " + std::to_string(version) +
                                                            " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  Reader r(buf, buf.size() - 8);
  r.bytes(8, "header");
  Checkpoint c;
  const std::string config_text = r.bytes(r.u64("config length"), "config");
  const std::uint64_t digest = r.u64("digest");
  c.epoch = r.u64("epoch");
  c.adam_steps = r.u64("optimizer step");
  const std::uint64_t count = r.u64("entry count");
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.bytes(r.u64("name length"), "entry name");
    std::istringstream t(r.bytes(r.u64("tensor length"), "tensor"), std::ios::binary);
    RawTensor raw;
    try {
      raw = read_raw_tensor(t);
    } catch (const DataError& e) {
      throw CheckpointError(CheckpointErrorKind::truncated, "entry '" + name + "': " + e.what());
    }
    c.entries.emplace_back(std::move(name), std::move(raw));
  }
  if (r.position() != buf.size() - 8) {
    throw CheckpointError(CheckpointErrorKind::checksum, "checkpoint has trailing bytes before its checksum");
  }
  Fnv1a h;
  h.update(std::string_view(buf.data(), buf.size() - 8));
  Reader tail(buf, buf.size());
  tail.bytes(buf.size() - 8, "body");
  if (tail.u64("checksum") != h.digest()) {
    throw CheckpointError(CheckpointErrorKind::checksum, "checkpoint checksum mismatch (file corrupted)");
  }
  try {
    c.config = ModelConfig::parse(config_text);
  } catch (const Error& e) {
    throw CheckpointError(CheckpointErrorKind::digest, std::string("checkpoint configuration unreadable: ") + e.what());
  }
  if (c.config.digest() != digest) {
    throw CheckpointError(CheckpointErrorKind::digest, "checkpoint configuration digest mismatch");
  }
  return c;
}

}  // namespace cardioseq
