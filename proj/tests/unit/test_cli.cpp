#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cardioseq/checkpoint.hpp"
#include "cardioseq/cli.hpp"
#include "cardioseq/dataset.hpp"
#include "cardioseq/gradcheck.hpp"
#include "cardioseq/nifti.hpp"
#include "cardioseq/tensor_io.hpp"
#include "cardioseq/trainer.hpp"
#include "temp_dir.hpp"

using namespace cardioseq;
using test::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) n += !line.empty();
  return n;
}

const std::vector<std::string> kSmallModel{"--channels", "2,4", "--resample", "none"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// Shared tiny cohort: 10 patients, 2 frames, 2x16x16.
class CliCohort : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    const auto r = run({"synth", "--out", (dir_->path() / "data").string(), "--patients", "10", "--frames", "2",
                        "--size", "2x16x16", "--seed", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path data() { return dir_->path() / "data"; }
  static fs::path path(const std::string& name) { return dir_->path() / name; }

  static std::vector<std::string> train_args(const std::string& ckpt, const std::string& mode) {
    return with({"train", "--data", data().string(), "--out", path(ckpt).string(), "--mode", mode,
                 "--stage1-epochs", "1", "--stage2-epochs", "1", "--stage1-lr", "1e-3", "--stage2-lr", "1e-3"},
                kSmallModel);
  }

  static TempDir* dir_;
};

TempDir* CliCohort::dir_ = nullptr;

}  // namespace

TEST(CliUsage, HelpListsDefaults) {
  const auto r = run({"train", "--help"});
  EXPECT_EQ(r.code, 0);
  for (auto needle : {"96x96x24", "--stage1-epochs UINT [10]", "--stage1-lr FLOAT:POSITIVE [0.0001]",
                      "--stage2-lr FLOAT:POSITIVE [0.0001]", "[0.7]", "7:2:1", "--mode", "--seed"}) {
    EXPECT_NE(r.out.find(needle), std::string::npos) << needle;
  }
  for (auto cmd : {"synth", "eval", "segment", "gradcheck"}) EXPECT_EQ(run({cmd, "--help"}).code, 0) << cmd;
}

TEST(CliUsage, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"dance"}).code, 2);
  EXPECT_EQ(run({"train", "--data", "x"}).code, 2);
  EXPECT_EQ(run({"train", "--data", "x", "--out", "y", "--mode", "sideways"}).code, 2);
  EXPECT_EQ(run({"synth", "--out", "x", "--size", "8x32"}).code, 2);
  EXPECT_EQ(run({"synth", "--out", "x", "--bogus"}).code, 2);
  EXPECT_EQ(run({"train", "--data", "x", "--out", "y", "--channels", "8,4"}).code, 2);
}

TEST(CliUsage, MissingDataExitsThree) {
  TempDir dir("cli");
  const auto r = run({"train", "--data", (dir / "missing").string(), "--out", (dir / "m.ckpt").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_FALSE(r.err.empty());
}

TEST(CliSynth, DeterministicLayout) {
  TempDir dir("cli");
  const std::vector<std::string> base{"synth", "--patients", "3", "--frames", "4", "--size", "2x16x16", "--seed",
                                      "9"};
  ASSERT_EQ(run(with(base, {"--out", (dir / "a").string()})).code, 0);
  ASSERT_EQ(run(with(base, {"--out", (dir / "b").string()})).code, 0);
  const auto ids = list_patients(dir / "a");
  ASSERT_EQ(ids, (std::vector<std::string>{"patient001", "patient002", "patient003"}));
  for (const auto& id : ids) {
    for (const auto& entry : fs::directory_iterator(dir / "a" / id)) {
      const auto name = entry.path().filename().string();
      EXPECT_EQ(slurp(entry.path()), slurp(dir / "b" / id / name)) << id << "/" << name;
    }
    const auto s = read_patient(dir / "a" / id);
    EXPECT_LT(s.ed_index, 4u);
    EXPECT_LT(s.es_index, 4u);
    EXPECT_EQ(s.length(), 4u);
  }
}

TEST(CliGradcheck, ReportsEveryOpOnceAndDetectsFaults) {
  const auto ok = run({"gradcheck", "--seed", "1"});
  EXPECT_EQ(ok.code, 0) << ok.err;
  std::map<std::string, int> seen;
  std::istringstream in(ok.out);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string name;
    ls >> name;
    ++seen[name];
  }
  for (const auto& n : gradcheck_suite_names()) EXPECT_EQ(seen[n], 1) << n;
  const auto bad = run({"gradcheck", "--inject-fault", "sigmoid"});
  EXPECT_EQ(bad.code, 4);
}

TEST_F(CliCohort, BaselineHasNoRecurrentParameters) {
  const auto r = run(train_args("base.ckpt", "baseline"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ck = load_checkpoint(path("base.ckpt"));
  for (const auto& name : ck.parameter_names()) EXPECT_EQ(name.rfind("encoder.", 0), 0u) << name;
  std::ifstream log(path("base.ckpt").string() + ".log.jsonl");
  const auto records = read_log_jsonl(log);
  ASSERT_EQ(records.size(), 7u);
  for (const auto& rec : records) EXPECT_EQ(rec.stage, 1);
}

TEST_F(CliCohort, TrainingLogMatchesIterationsAndIsReproducible) {
  ASSERT_EQ(run(train_args("bi1.ckpt", "bidirectional")).code, 0);
  ASSERT_EQ(run(train_args("bi2.ckpt", "bidirectional")).code, 0);
  EXPECT_EQ(line_count(path("bi1.ckpt").string() + ".log.jsonl"), 14u);
  EXPECT_EQ(slurp(path("bi1.ckpt").string() + ".log.jsonl"), slurp(path("bi2.ckpt").string() + ".log.jsonl"));
  EXPECT_EQ(slurp(path("bi1.ckpt")), slurp(path("bi2.ckpt")));
  const auto ck = load_checkpoint(path("bi1.ckpt"));
  bool has_bwd = false;
  for (const auto& name : ck.parameter_names()) has_bwd |= name.rfind("decoder_bwd.", 0) == 0;
  EXPECT_TRUE(has_bwd);
}

TEST_F(CliCohort, ConfigFileIsOverriddenByFlags) {
  {
    std::ofstream cfg(path("train.cfg"));
    cfg << "# tiny run\nstage1-epochs = 2\nstage2-epochs = 0\nmode = forward\nchannels = 2,4\nresample = none\n";
  }
  auto r = run({"train", "--config", path("train.cfg").string(), "--data", data().string(), "--out",
                path("cfg.ckpt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(line_count(path("cfg.ckpt").string() + ".log.jsonl"), 14u);
  r = run({"train", "--config", path("train.cfg").string(), "--data", data().string(), "--out",
           path("cfg2.ckpt").string(), "--stage1-epochs", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(line_count(path("cfg2.ckpt").string() + ".log.jsonl"), 7u);
  EXPECT_EQ(load_checkpoint(path("cfg2.ckpt")).config.decoder, DecoderMode::forward_only);

  std::ofstream(path("bad.cfg")) << "stage1-epochs = 1\nwarp-speed = 9\n";
  r = run({"train", "--config", path("bad.cfg").string(), "--data", data().string(), "--out",
           path("bad.ckpt").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("warp-speed"), std::string::npos) << r.err;
}

TEST_F(CliCohort, EvalWritesReportsAndChecksConfiguration) {
  ASSERT_EQ(run(train_args("ev.ckpt", "forward")).code, 0);
  auto r = run({"eval", "--data", data().string(), "--ckpt", path("ev.ckpt").string(), "--split", "val", "--report",
                path("val.csv").string(), "--resample", "none"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream csv(path("val.csv"));
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "patient,phase,class,dice,iou");
  EXPECT_EQ(line_count(path("val.csv")), 1u + 2 * 6);
  EXPECT_EQ(line_count(path("val.consistency.jsonl")), 2u * 1);

  r = run(with({"eval", "--data", data().string(), "--ckpt", path("ev.ckpt").string(), "--report",
                path("x.csv").string(), "--resample", "none", "--channels", "2,6"},
               {}));
  EXPECT_EQ(r.code, 3);
  r = run({"eval", "--data", data().string(), "--ckpt", path("ev.ckpt").string(), "--report", path("y.csv").string(),
           "--resample", "none", "--mode", "forward", "--channels", "2,4"});
  EXPECT_EQ(r.code, 0) << r.err;
}

TEST_F(CliCohort, ModelScoredAgainstItsOwnPredictionsIsPerfect) {
  ASSERT_EQ(run(train_args("self.ckpt", "bidirectional")).code, 0);
  const fs::path mirror = path("mirror");
  for (const auto& id : list_patients(data())) {
    const auto seg_dir = path("seg_" + id);
    const auto r = run({"segment", "--ckpt", path("self.ckpt").string(), "--in", (data() / id).string(), "--out",
                        seg_dir.string(), "--resample", "none"});
    ASSERT_EQ(r.code, 0) << r.err;
    auto s = read_patient(data() / id);
    for (std::size_t t = 0; t < s.length(); ++t) {
      char stem[16];
      std::snprintf(stem, sizeof stem, "frame%02zu", t);
      std::ifstream in(seg_dir / (std::string(stem) + ".seg"), std::ios::binary);
      const auto raw = read_raw_tensor(in);
      LabelVolume l = LabelVolume::zeros(s.extents());
      l.data = std::get<std::vector<std::uint8_t>>(raw.data);
      s.labels[t] = l;
    }
    write_patient(s, mirror / id);
  }
  const auto r = run({"eval", "--data", mirror.string(), "--ckpt", path("self.ckpt").string(), "--split", "all",
                      "--report", path("self.csv").string(), "--resample", "none"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream csv(path("self.csv"));
  std::string line;
  std::getline(csv, line);
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    EXPECT_TRUE(line.ends_with(",1,1")) << line;
  }
  EXPECT_EQ(rows, 60u);
}

TEST_F(CliCohort, SegmentWritesOneLabelFilePerFrameAndSlices) {
  ASSERT_EQ(run(train_args("sg.ckpt", "baseline")).code, 0);
  const auto out = path("seg_out");
  auto r = run({"segment", "--ckpt", path("sg.ckpt").string(), "--in", (data() / "patient002").string(), "--out",
                out.string(), "--resample", "none", "--slices"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (auto stem : {"frame00", "frame01"}) {
    std::ifstream in(out / (std::string(stem) + ".seg"), std::ios::binary);
    const auto raw = read_raw_tensor(in);
    EXPECT_EQ(raw.shape, (Shape{2, 16, 16}));
    for (auto v : std::get<std::vector<std::uint8_t>>(raw.data)) ASSERT_LE(v, 3);
    const auto pgm = slurp(out / (std::string(stem) + ".pgm"));
    ASSERT_EQ(pgm.rfind("P5\n16 16\n255\n", 0), 0u);
    EXPECT_EQ(pgm.size(), std::string("P5\n16 16\n255\n").size() + 256);
    for (std::size_t i = 13; i < pgm.size(); ++i) {
      const auto v = static_cast<unsigned char>(pgm[i]);
      ASSERT_TRUE(v == 0 || v == 85 || v == 170 || v == 255) << int(v);
    }
  }
  EXPECT_FALSE(fs::exists(out / "frame02.seg"));
  r = run({"segment", "--ckpt", path("sg.ckpt").string(), "--in", (data() / "patient002").string(), "--out",
           (out / "bad").string(), "--resample", "15x16x2"});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("divisible"), std::string::npos) << r.err;
}
