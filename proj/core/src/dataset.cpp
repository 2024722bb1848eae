#include "cardioseq/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <regex>
#include <set>

#include "cardioseq/nifti.hpp"
#include "cardioseq/resample.hpp"

namespace fs = std::filesystem;

namespace cardioseq {

namespace {

std::string frame_stem(std::size_t t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame%02zu", t);
  return buf;
}

std::map<std::string, std::string> read_key_values(const fs::path& path, char separator) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    const auto pos = line.find(separator);
    if (pos == std::string::npos) continue;
    kv[trim(line.substr(0, pos))] = trim(line.substr(pos + 1));
  }
  return kv;
}

std::size_t parse_index(const std::map<std::string, std::string>& kv, const std::string& key, const fs::path& file) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw DataError(file.string() + " lacks '" + key + "'");
  try {
    std::size_t used = 0;
    const long long v = std::stoll(it->second, &used);
    if (used != it->second.size() || v < 0) throw std::invalid_argument("negative");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw DataError(file.string() + ": '" + key + "' is not a non-negative integer: " + it->second);
  }
}

SequenceSample read_phantom_layout(const fs::path& dir) {
  const auto meta_path = dir / "meta.txt";
  const auto kv = read_key_values(meta_path, '=');
  SequenceSample s;
  s.patient_id = dir.filename().string();
  const std::size_t frames = parse_index(kv, "T", meta_path);
  s.ed_index = parse_index(kv, "ed", meta_path);
  s.es_index = parse_index(kv, "es", meta_path);
  if (frames == 0) throw DataError(meta_path.string() + ": T must be positive");
  bool any_label = false;
  std::vector<std::optional<LabelVolume>> labels;
  for (std::size_t t = 0; t < frames; ++t) {
    s.frames.push_back(read_nifti(dir / (frame_stem(t) + ".nii")));
    const auto gt = dir / (frame_stem(t) + "_gt.nii");
    if (fs::exists(gt)) {
      labels.emplace_back(read_label_nifti(gt));
      any_label = true;
    } else {
      labels.emplace_back(std::nullopt);
    }
  }
  if (any_label) s.labels = std::move(labels);
  return s;
}

SequenceSample read_acdc_layout(const fs::path& dir) {
  const auto info_path = dir / "Info.cfg";
  const auto kv = read_key_values(info_path, ':');
  const std::size_t ed = parse_index(kv, "ED", info_path);
  const std::size_t es = parse_index(kv, "ES", info_path);
  const std::regex pattern(R"((patient\d+)_frame(\d+)\.nii)");
  std::map<std::size_t, fs::path> frames;
  std::string patient;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) {
      frames[static_cast<std::size_t>(std::stoul(m[2].str()))] = entry.path();
      patient = m[1].str();
    }
  }
  if (frames.empty()) throw DataError("no patientXXX_frameYY.nii files in " + dir.string());
  SequenceSample s;
  s.patient_id = patient;
  std::optional<std::size_t> ed_pos;
  std::optional<std::size_t> es_pos;
  bool any_label = false;
  std::vector<std::optional<LabelVolume>> labels;
  for (const auto& [number, path] : frames) {
    if (number == ed) ed_pos = s.frames.size();
    if (number == es) es_pos = s.frames.size();
    s.frames.push_back(read_nifti(path));
    auto gt = path;
    gt.replace_filename(path.stem().string() + "_gt.nii");
    if (fs::exists(gt)) {
      labels.emplace_back(read_label_nifti(gt));
      any_label = true;
    } else {
      labels.emplace_back(std::nullopt);
    }
  }
  if (!ed_pos || !es_pos) {
    throw DataError(info_path.string() + ": ED frame " + std::to_string(ed) + " or ES frame " + std::to_string(es) +
                    " has no matching image file");
  }
  s.ed_index = *ed_pos;
  s.es_index = *es_pos;
  if (any_label) s.labels = std::move(labels);
  return s;
}

}  // namespace

void write_patient(const SequenceSample& sample, const fs::path& dir) {
  sample.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t t = 0; t < sample.length(); ++t) {
    write_nifti(sample.frames[t], dir / (frame_stem(t) + ".nii"));
    if (!sample.labels.empty() && sample.labels[t]) {
      write_label_nifti(*sample.labels[t], dir / (frame_stem(t) + "_gt.nii"), sample.frames[t].spacing);
    }
  }
  std::ofstream meta(dir / "meta.txt");
  meta << "ed=" << sample.ed_index << "\nes=" << sample.es_index << "\nT=" << sample.length() << "\n";
  if (!meta) throw DataError("cannot write " + (dir / "meta.txt").string());
}

SequenceSample read_patient(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a patient directory: " + dir.string());
  SequenceSample s;
  if (fs::exists(dir / "meta.txt")) {
    s = read_phantom_layout(dir);
  } else if (fs::exists(dir / "Info.cfg")) {
    s = read_acdc_layout(dir);
  } else {
    throw DataError(dir.string() + " has neither meta.txt nor Info.cfg");
  }
  try {
    s.validate();
  } catch (const DataError&) {
    throw;
  } catch (const Error& e) {
    throw DataError(dir.string() + ": " + e.what());
  }
  return s;
}

std::vector<std::string> list_patients(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("dataset directory not found: " + root.string());
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && entry.path().filename().string().rfind("patient", 0) == 0) {
      ids.push_back(entry.path().filename().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

SequenceSample preprocess(const SequenceSample& sample, const Dims3& target, bool normalize) {
  SequenceSample out = sample;
  for (auto& f : out.frames) {
    f = resample_linear(f, target);
    if (normalize) f = normalize_intensity(f);
  }
  for (auto& l : out.labels) {
    if (l) *l = resample_nearest(*l, target);
  }
  return out;
}

PatientSplit split_patients(const std::vector<std::string>& ids, std::uint64_t seed) {
  if (ids.size() < 10) {
    throw ValueError("a 7:2:1 split needs at least 10 patients, got " + std::to_string(ids.size()));
  }
  if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size()) {
    throw ValueError("patient ids must be unique");
  }
  std::vector<std::string> order = ids;
  std::sort(order.begin(), order.end());
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(order[i], order[pick(rng)]);
  }
  const std::size_t n = order.size();
  const std::size_t n_train = n * 7 / 10;
  const std::size_t n_val = n * 2 / 10;
  PatientSplit split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                   order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return split;
}

}  // namespace cardioseq
