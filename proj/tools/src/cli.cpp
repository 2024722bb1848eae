#include "cardioseq/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "cardioseq/checkpoint.hpp"
#include "cardioseq/dataset.hpp"
#include "cardioseq/gradcheck.hpp"
#include "cardioseq/metrics.hpp"
#include "cardioseq/phantom.hpp"
#include "cardioseq/resample.hpp"
#include "cardioseq/tensor_io.hpp"
#include "cardioseq/trainer.hpp"

namespace fs = std::filesystem;

namespace cardioseq::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(text);
  while (std::getline(in, part, sep)) parts.push_back(part);
  return parts;
}

std::size_t parse_size(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size() || v <= 0) throw std::invalid_argument(text);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw UsageError(what + ": expected a positive integer, got '" + text + "'");
  }
}

std::array<std::size_t, 3> parse_triple(const std::string& text, const std::string& what) {
  const auto parts = split(text, 'x');
  if (parts.size() != 3) throw UsageError(what + ": expected AxBxC, got '" + text + "'");
  return {parse_size(parts[0], what), parse_size(parts[1], what), parse_size(parts[2], what)};
}

Dims3 parse_dhw(const std::string& text, const std::string& what) {
  const auto t = parse_triple(text, what);
  return {t[0], t[1], t[2]};
}

// XxYxZ: in-plane width, in-plane height, slices.
std::optional<Dims3> parse_resample(const std::string& text) {
  if (text == "none") return std::nullopt;
  const auto t = parse_triple(text, "--resample");
  return Dims3{t[2], t[1], t[0]};
}

std::vector<std::size_t> parse_list(const std::string& text, const std::string& what) {
  std::vector<std::size_t> out;
  if (text.empty()) return out;
  for (const auto& p : split(text, ',')) out.push_back(parse_size(p, what));
  return out;
}

DecoderMode mode_from_name(const std::string& name) {
  if (name == "baseline") return DecoderMode::none;
  if (name == "forward") return DecoderMode::forward_only;
  if (name == "bidirectional") return DecoderMode::bidirectional;
  throw UsageError("--mode must be baseline, forward or bidirectional");
}

std::size_t env_threads() {
  const char* v = std::getenv("CARDIOSEQ_THREADS");
  if (!v || !*v) return 1;
  return parse_size(v, "CARDIOSEQ_THREADS");
}

std::string frame_name(std::size_t t) {
  std::ostringstream os;
  os << "frame" << std::setw(2) << std::setfill('0') << t;
  return os.str();
}

struct ModelFlags {
  std::string channels = "8,16,32,64";
  std::string decoder_channels;
  std::string pooling = "auto";
  std::string kernel = "3x3x3";
  std::string fusion = "average";
  bool no_instance_norm = false;

  void add(CLI::App& app) {
    app.add_option("--channels", channels, "Encoder channels per level, finest first (level count = list length)");
    app.add_option("--decoder-channels", decoder_channels, "ConvLSTM hidden channels per level (empty: as --channels)");
    app.add_option("--pooling", pooling, "Pooling factors DxHxW per transition, comma separated, or 'auto'");
    app.add_option("--kernel", kernel, "Convolution kernel DxHxW (odd extents)");
    app.add_option("--fusion", fusion, "Bidirectional fusion: average or learned")
        ->check(CLI::IsMember({"average", "learned"}));
    app.add_flag("--no-instance-norm", no_instance_norm, "Disable instance normalisation in residual blocks");
  }

  ModelConfig build(DecoderMode mode) const {
    ModelConfig c;
    c.channels = parse_list(channels, "--channels");
    c.levels = c.channels.size();
    c.decoder_channels = parse_list(decoder_channels, "--decoder-channels");
    if (pooling != "auto") {
      for (const auto& p : split(pooling, ',')) c.pooling.push_back(parse_dhw(p, "--pooling"));
    }
    c.kernel = parse_dhw(kernel, "--kernel");
    c.fusion = parse_fusion_mode(fusion);
    c.instance_norm = !no_instance_norm;
    c.decoder = mode;
    c.validate();
    return c;
  }
};

std::vector<SequenceSample> load_patients(const fs::path& root, const std::vector<std::string>& ids,
                                          const std::optional<Dims3>& target) {
  std::vector<SequenceSample> out;
  for (const auto& id : ids) {
    auto s = read_patient(root / id);
    out.push_back(target ? preprocess(s, *target) : preprocess(s, s.extents()));
  }
  return out;
}

void check_writable_parent(const fs::path& path) {
  const auto parent = path.has_parent_path() ? path.parent_path() : fs::path(".");
  if (!fs::is_directory(parent)) throw DataError("output directory does not exist: " + parent.string());
}

// ----------------------------------------------------------------- synth

struct SynthArgs {
  std::string out;
  std::size_t patients = 10;
  std::size_t frames = 8;
  std::string size = "8x32x32";
  std::uint64_t seed = 0;
  double noise = 0.05;
  double amplitude = 0.3;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  if (a.patients == 0 || a.frames == 0) throw UsageError("--patients and --frames must be positive");
  PhantomConfig base = PhantomConfig::for_grid(a.frames, parse_dhw(a.size, "--size"));
  base.noise_std = a.noise;
  base.amplitude = a.amplitude;
  base.validate();
  std::mt19937_64 rng(a.seed);
  for (std::size_t p = 1; p <= a.patients; ++p) {
    PhantomConfig cfg = base.jittered(rng);
    auto sample = generate_phantom_sequence(cfg);
    std::ostringstream id;
    id << "patient" << std::setw(3) << std::setfill('0') << p;
    sample.patient_id = id.str();
    write_patient(sample, fs::path(a.out) / id.str());
  }
  out << "wrote " << a.patients << " phantom patients to " << a.out << "\n";
  return ok;
}

// ----------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string out;
  std::string mode = "bidirectional";
  std::string log;
  std::string resample = "96x96x24";
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  std::size_t stage1_epochs = 10;
  double stage1_lr = 1e-4;
  std::size_t stage2_epochs = 10;
  double stage2_lr = 1e-4;
  double lr_decay = 0.7;
  std::string loss = "cross_entropy";
  double clip = 0.0;
  bool no_augment = false;
  ModelFlags model;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const DecoderMode mode = mode_from_name(a.mode);
  const ModelConfig config = a.model.build(mode);
  const auto target = parse_resample(a.resample);
  TrainConfig tc;
  tc.stage1_epochs = a.stage1_epochs;
  tc.stage1_lr = a.stage1_lr;
  tc.stage2_epochs = a.stage2_epochs;
  tc.stage2_lr = a.stage2_lr;
  tc.lr_decay = a.lr_decay;
  tc.loss = parse_loss_mode(a.loss);
  tc.adam.clip_norm = a.clip;
  tc.augment = !a.no_augment;
  tc.seed = a.seed;
  tc.validate();
  const fs::path ckpt_path(a.out);
  const fs::path log_path = a.log.empty() ? fs::path(a.out + ".log.jsonl") : fs::path(a.log);
  check_writable_parent(ckpt_path);
  check_writable_parent(log_path);

  const auto split = split_patients(list_patients(a.data), a.split_seed);
  const auto train = load_patients(a.data, split.train, target);
  for (const auto& s : train) resolve_pooling(config, s.extents());

  SegNet<float> model(config);
  model.init_parameters(a.seed);
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw DataError("cannot write training log " + log_path.string());
  const LogSink sink = [&](const LogRecord& r) { log << to_json(r) << "\n" << std::flush; };

  Adam<float> stage1_opt(tc.adam);
  auto log1 = train_stage1(model, train, tc, sink, &stage1_opt);
  double final_loss = log1.empty() ? 0.0 : log1.back().loss;
  std::size_t iterations = log1.size();
  Adam<float> stage2_opt(tc.adam);
  const Adam<float>* last_opt = &stage1_opt;
  std::uint64_t epochs = tc.stage1_epochs;
  if (mode != DecoderMode::none) {
    auto log2 = train_stage2(model, train, tc, sink, &stage2_opt);
    if (!log2.empty()) final_loss = log2.back().loss;
    iterations += log2.size();
    last_opt = &stage2_opt;
    epochs += tc.stage2_epochs;
  }
  save_checkpoint(make_checkpoint(model, last_opt, epochs), ckpt_path);
  out << std::setprecision(17) << "trained " << a.mode << " on " << train.size() << " patients, " << iterations
      << " iterations, final loss " << final_loss << "\n";
  if (!train.empty()) out << "network grid " << to_string(train.front().extents()) << "\n";
  out << "checkpoint " << ckpt_path.string() << ", log " << log_path.string() << "\n";
  return ok;
}

// ----------------------------------------------------------------- eval

struct EvalArgs {
  std::string data;
  std::string ckpt;
  std::string split = "test";
  std::string report;
  std::string consistency;
  std::string resample = "96x96x24";
  std::string overall_iou = "foreground";
  std::uint64_t split_seed = 0;
  std::string mode;
  ModelFlags model;
  CLI::App* app = nullptr;
};

SegNet<float> model_from_checkpoint(const std::string& path) {
  const auto ckpt = load_checkpoint(path);
  SegNet<float> model(ckpt.config);
  restore_checkpoint(ckpt, model);
  return model;
}

MetricsReport evaluate_patient(const SegNet<float>& model, const SequenceSample& s, OverallIou overall) {
  const auto pred = segment_sequence(s, model);
  if (s.labels.empty() || !s.labels[s.ed_index] || !s.labels[s.es_index]) {
    throw DataError("patient '" + s.patient_id + "' lacks ground truth at the ED or ES frame");
  }
  std::vector<LabelVolume> gt;
  for (std::size_t t = 0; t < s.length(); ++t) gt.push_back(s.labels[t] ? *s.labels[t] : pred[t]);
  auto r = evaluate_sequence(pred, gt, s.ed_index, s.es_index, overall);
  r.patient = s.patient_id;
  return r;
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::size_t threads) {
  const auto target = parse_resample(a.resample);
  const OverallIou overall = a.overall_iou == "foreground" ? OverallIou::foreground_union : OverallIou::mean_per_class;
  auto ckpt = load_checkpoint(a.ckpt);
  bool model_flags_given = !a.mode.empty();
  for (const char* name : {"--channels", "--decoder-channels", "--pooling", "--kernel", "--fusion",
                           "--no-instance-norm"}) {
    model_flags_given = model_flags_given || a.app->count(name) > 0;
  }
  if (model_flags_given) {
    const DecoderMode mode = a.mode.empty() ? ckpt.config.decoder : mode_from_name(a.mode);
    const ModelConfig requested = a.model.build(mode);
    if (requested.digest() != ckpt.config.digest()) {
      throw CheckpointError(CheckpointErrorKind::digest,
                            "model flags do not match the checkpoint configuration (digest " +
                                std::to_string(requested.digest()) + " vs " + std::to_string(ckpt.config.digest()) +
                                ")");
    }
  }
  SegNet<float> model(ckpt.config);
  restore_checkpoint(ckpt, model);

  const auto ids = list_patients(a.data);
  std::vector<std::string> chosen;
  if (a.split == "all") {
    chosen = ids;
  } else {
    const auto split = split_patients(ids, a.split_seed);
    chosen = a.split == "val" ? split.val : split.test;
  }
  const fs::path report_path(a.report);
  const fs::path cons_path =
      a.consistency.empty() ? fs::path(a.report).replace_extension(".consistency.jsonl") : fs::path(a.consistency);
  check_writable_parent(report_path);
  check_writable_parent(cons_path);

  std::vector<MetricsReport> reports(chosen.size());
  auto work = [&](std::size_t i) {
    const auto samples = load_patients(a.data, {chosen[i]}, target);
    reports[i] = evaluate_patient(model, samples[0], overall);
  };
  for (std::size_t begin = 0; begin < chosen.size(); begin += threads) {
    std::vector<std::future<void>> jobs;
    for (std::size_t i = begin; i < std::min(begin + threads, chosen.size()); ++i) {
      jobs.push_back(std::async(threads > 1 ? std::launch::async : std::launch::deferred, work, i));
    }
    for (auto& j : jobs) j.get();
  }

  std::ofstream csv(report_path, std::ios::trunc);
  if (!csv) throw DataError("cannot write report " + report_path.string());
  write_report_csv(reports, csv);
  std::ofstream jsonl(cons_path, std::ios::trunc);
  if (!jsonl) throw DataError("cannot write consistency file " + cons_path.string());
  write_consistency_jsonl(reports, jsonl);

  double dice_sum = 0;
  double cons_sum = 0;
  for (const auto& r : reports) {
    dice_sum += r.mean_dice();
    cons_sum += r.mean_consistency();
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, reports.size()));
  out << std::setprecision(6) << "evaluated " << reports.size() << " patients (" << a.split
      << "): mean Dice " << dice_sum / n << ", mean consistency " << cons_sum / n << "\n";
  return ok;
}

// ----------------------------------------------------------------- segment

struct SegmentArgs {
  std::string ckpt;
  std::string in;
  std::string out;
  std::string resample = "96x96x24";
  bool slices = false;
};

void write_pgm(const LabelVolume& labels, const fs::path& path) {
  const std::size_t d = labels.extents.d / 2;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P5\n" << labels.extents.w << " " << labels.extents.h << "\n255\n";
  for (std::size_t h = 0; h < labels.extents.h; ++h) {
    for (std::size_t w = 0; w < labels.extents.w; ++w) {
      out.put(static_cast<char>(labels.at(d, h, w) * 85));
    }
  }
}

int cmd_segment(const SegmentArgs& a, std::ostream& out) {
  const auto target = parse_resample(a.resample);
  const auto model = model_from_checkpoint(a.ckpt);
  const auto raw = read_patient(a.in);
  const auto sample = target ? preprocess(raw, *target) : preprocess(raw, raw.extents());
  resolve_pooling(model.config(), sample.extents());
  const auto pred = segment_sequence(sample, model);
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw DataError("cannot create " + a.out + ": " + ec.message());
  for (std::size_t t = 0; t < pred.size(); ++t) {
    const LabelVolume native = resample_nearest(pred[t], raw.frames[t].extents);
    const auto base = fs::path(a.out) / frame_name(t);
    std::ofstream seg(base.string() + ".seg", std::ios::binary | std::ios::trunc);
    if (!seg) throw DataError("cannot write " + base.string() + ".seg");
    write_raw_tensor(seg, {native.extents.d, native.extents.h, native.extents.w},
                     std::span<const std::uint8_t>(native.data));
    if (a.slices) write_pgm(native, base.string() + ".pgm");
  }
  out << "segmented " << pred.size() << " frames into " << a.out << "\n";
  out << "network grid " << to_string(sample.extents()) << "\n";
  return ok;
}

// ----------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  std::uint64_t seed = 0;
  std::string inject_fault;
  double threshold = 1e-4;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  testing::set_backward_fault(a.inject_fault);
  GradcheckReport report;
  try {
    report = run_gradcheck_suite(a.seed, a.threshold);
  } catch (...) {
    testing::set_backward_fault("");
    throw;
  }
  testing::set_backward_fault("");
  out << std::left << std::setw(32) << "operation" << std::setw(14) << "worst_rel_err" << std::setw(8) << "coords"
      << "status\n";
  for (const auto& r : report.results) {
    out << std::left << std::setw(32) << r.name << std::setw(14) << std::setprecision(3) << std::scientific
        << r.worst_error << std::defaultfloat << std::setw(8) << r.coordinates << (r.passed ? "PASS" : "FAIL")
        << "\n";
  }
  out << (report.passed() ? "gradcheck passed" : "gradcheck FAILED") << " (threshold " << a.threshold << ")\n";
  return report.passed() ? ok : numeric;
}


std::string trim_text(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool flag_value(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError("config key '" + key + "' expects true or false, got '" + value + "'");
}

// Splices `key = value` lines of the subcommand's --config file into the
// argument list as flags. Keys already present on the command line keep
// their command-line value; keys that name no option of the subcommand are
// rejected.
std::vector<std::string> expand_config_file(CLI::App& app, std::vector<std::string> args) {
  if (args.size() < 2) return args;
  CLI::App* sub = app.get_subcommand_no_throw(args[1]);
  if (sub == nullptr) return args;

  std::string path;
  std::set<std::string> given;
  for (std::size_t i = 2; i < args.size(); ++i) {
    const auto& a = args[i];
    if (a.rfind("--", 0) != 0) continue;
    const auto eq = a.find('=');
    const std::string name = a.substr(2, eq == std::string::npos ? std::string::npos : eq - 2);
    given.insert(name);
    if (name == "config") {
      if (eq != std::string::npos) {
        path = a.substr(eq + 1);
      } else if (i + 1 < args.size()) {
        path = args[i + 1];
      }
    }
  }
  if (path.empty()) return args;

  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim_text(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected 'key = value', got '" + line + "'");
    }
    std::string key = trim_text(line.substr(0, eq));
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    std::string value = trim_text(line.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front()) {
      value = value.substr(1, value.size() - 2);
    }
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config" || key == "help") {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": unknown config key '" + key + "' for " +
                        sub->get_name());
    }
    if (given.count(key)) continue;
    given.insert(key);
    if (opt->get_expected_min() == 0) {
      if (flag_value(key, value)) args.push_back("--" + key);
    } else {
      args.push_back("--" + key);
      args.push_back(value);
    }
  }
  return args;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"cardioseq: temporally consistent cardiac MR segmentation with a residual U-Net encoder and "
               "bidirectional ConvLSTM decoders"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", "cardioseq 0.1.0");

  std::string config_path;
  auto with_config = [&config_path](CLI::App* sub) {
    sub->add_option("--config", config_path, "Read options from a 'key = value' file (# comments); flags win");
  };

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a phantom dataset in the patientNNN/frameTT.nii layout");
  with_config(s);
  s->add_option("--out", synth.out, "Output dataset directory")->required();
  s->add_option("--patients", synth.patients, "Number of patients");
  s->add_option("--frames", synth.frames, "Frames per sequence");
  s->add_option("--size", synth.size, "Volume extents DxHxW (slices x height x width)");
  s->add_option("--seed", synth.seed, "Random seed");
  s->add_option("--noise", synth.noise, "Gaussian noise standard deviation")->check(CLI::NonNegativeNumber);
  s->add_option("--amplitude", synth.amplitude, "Contraction amplitude in [0, 1)")->check(CLI::Range(0.0, 0.999999));

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Two-stage training (stage 2 is skipped in baseline mode)");
  with_config(t);
  t->add_option("--data", train.data, "Dataset directory")->required();
  t->add_option("--out", train.out, "Checkpoint path")->required();
  t->add_option("--mode", train.mode, "baseline (Res U-net), forward (+f-ConvLSTM) or bidirectional")
      ->check(CLI::IsMember({"baseline", "forward", "bidirectional"}));
  t->add_option("--log", train.log, "JSON-lines training log (default: <out>.log.jsonl)");
  t->add_option("--resample", train.resample,
                "Network grid XxYxZ (in-plane x, in-plane y, slices) or 'none' to keep native extents");
  t->add_option("--seed", train.seed, "Initialisation, shuffling and augmentation seed");
  t->add_option("--split-seed", train.split_seed, "Seed of the 7:2:1 patient split");
  t->add_option("--stage1-epochs", train.stage1_epochs, "Encoder-only epochs");
  t->add_option("--stage1-lr", train.stage1_lr, "Encoder-only learning rate")->check(CLI::PositiveNumber);
  t->add_option("--stage2-epochs", train.stage2_epochs, "Joint epochs");
  t->add_option("--stage2-lr", train.stage2_lr, "Joint initial learning rate")->check(CLI::PositiveNumber);
  t->add_option("--lr-decay", train.lr_decay, "Per-epoch learning rate factor in stage 2")
      ->check(CLI::Range(0.0, 1.0));
  t->add_option("--loss", train.loss, "cross_entropy or cross_entropy_plus_soft_dice")
      ->check(CLI::IsMember({"cross_entropy", "cross_entropy_plus_soft_dice"}));
  t->add_option("--clip", train.clip, "Global gradient-norm clipping threshold (0 disables)")
      ->check(CLI::NonNegativeNumber);
  t->add_flag("--no-augment", train.no_augment, "Disable scale/flip augmentation");
  train.model.add(*t);

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Score a checkpoint on the validation or test split");
  with_config(e);
  e->add_option("--data", eval.data, "Dataset directory")->required();
  e->add_option("--ckpt", eval.ckpt, "Checkpoint path")->required();
  e->add_option("--split", eval.split, "val, test, or all patients")->check(CLI::IsMember({"val", "test", "all"}));
  e->add_option("--split-seed", eval.split_seed, "Seed of the 7:2:1 patient split");
  e->add_option("--report", eval.report, "Metrics CSV path")->required();
  e->add_option("--consistency", eval.consistency,
                "Consistency JSON-lines path (default: report path with .consistency.jsonl)");
  e->add_option("--resample", eval.resample, "Network grid XxYxZ or 'none'");
  e->add_option("--overall-iou", eval.overall_iou, "Overall IoU: foreground union or mean-class")
      ->check(CLI::IsMember({"foreground", "mean-class"}));
  e->add_option("--mode", eval.mode, "Expected decoder mode; any model flag enables a configuration check")
      ->check(CLI::IsMember({"baseline", "forward", "bidirectional"}));
  eval.model.add(*e);
  eval.app = e;

  SegmentArgs seg;
  auto* g = app.add_subcommand("segment", "Label every frame of one patient directory");
  with_config(g);
  g->add_option("--ckpt", seg.ckpt, "Checkpoint path")->required();
  g->add_option("--in", seg.in, "Patient directory (phantom or ACDC layout, uncompressed .nii)")->required();
  g->add_option("--out", seg.out, "Output directory for frameTT.seg files")->required();
  g->add_option("--resample", seg.resample, "Network grid XxYxZ or 'none'");
  g->add_flag("--slices", seg.slices, "Also write mid-depth slices as PGM images (levels 0/85/170/255)");

  GradcheckArgs gc;
  auto* c = app.add_subcommand("gradcheck", "64-bit finite-difference check of every differentiable operation");
  with_config(c);
  c->add_option("--seed", gc.seed, "Random seed");
  c->add_option("--threshold", gc.threshold, "Relative error threshold")->check(CLI::PositiveNumber);
  c->add_option("--inject-fault", gc.inject_fault, "Negate the backward rule of the named operation (self-test)");

  std::vector<std::string> args(argv, argv + argc);
  try {
    args = expand_config_file(app, std::move(args));
  } catch (const ConfigError& ex) {
    err << "error: " << ex.what() << "\n";
    return usage;
  }
  std::vector<const char*> expanded;
  for (const auto& a : args) expanded.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(expanded.size()), expanded.data());
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? ok : usage;
  }

  try {
    const std::size_t threads = env_threads();
    set_compute_threads(threads);
    if (*s) return cmd_synth(synth, out);
    if (*t) return cmd_train(train, out);
    if (*e) return cmd_eval(eval, out, threads);
    if (*g) return cmd_segment(seg, out);
    if (*c) return cmd_gradcheck(gc, out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << "\n";
    return usage;
  } catch (const ConfigError& ex) {
    err << "error: " << ex.what() << "\n";
    return usage;
  } catch (const NumericError& ex) {
    err << "numeric failure: " << ex.what() << "\n";
    return numeric;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return data;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return data;
  }
  return usage;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"cardioseq"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace cardioseq::cli
