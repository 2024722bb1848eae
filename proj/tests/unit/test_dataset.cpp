#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "cardioseq/dataset.hpp"
#include "cardioseq/nifti.hpp"
#include "cardioseq/phantom.hpp"
#include "temp_dir.hpp"

using namespace cardioseq;
using test::TempDir;

namespace {

std::vector<std::string> make_ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("patient" + std::to_string(1000 + i));
  return ids;
}

Volume tagged_volume(float tag) {
  Volume v = Volume::zeros({2, 4, 4});
  std::fill(v.data.begin(), v.data.end(), tag);
  return v;
}

}  // namespace

TEST(PatientIo, PhantomLayoutRoundTrips) {
  TempDir dir("ds");
  auto pc = PhantomConfig::for_grid(4, {2, 16, 16}, 3);
  auto s = generate_phantom_sequence(pc);
  s.patient_id = "patient007";
  write_patient(s, dir / "patient007");
  EXPECT_TRUE(std::filesystem::exists(dir / "patient007" / "frame00.nii"));
  EXPECT_TRUE(std::filesystem::exists(dir / "patient007" / "frame03_gt.nii"));
  const auto back = read_patient(dir / "patient007");
  EXPECT_EQ(back.patient_id, "patient007");
  ASSERT_EQ(back.length(), 4u);
  EXPECT_EQ(back.ed_index, s.ed_index);
  EXPECT_EQ(back.es_index, s.es_index);
  for (std::size_t t = 0; t < 4; ++t) {
    EXPECT_EQ(back.frames[t].data, s.frames[t].data);
    EXPECT_EQ(back.labels[t]->data, s.labels[t]->data);
  }
  std::ifstream meta(dir / "patient007" / "meta.txt");
  std::string text((std::istreambuf_iterator<char>(meta)), {});
  EXPECT_NE(text.find("T=4"), std::string::npos);
}

TEST(PatientIo, UnlabeledFramesStayAbsent) {
  TempDir dir("ds");
  auto s = generate_phantom_sequence(PhantomConfig::for_grid(3, {2, 16, 16}, 1));
  s.labels[1].reset();
  write_patient(s, dir / "patient001");
  EXPECT_FALSE(std::filesystem::exists(dir / "patient001" / "frame01_gt.nii"));
  const auto back = read_patient(dir / "patient001");
  EXPECT_TRUE(back.labels[0].has_value());
  EXPECT_FALSE(back.labels[1].has_value());
}

TEST(PatientIo, AcdcLayoutOrdersFramesAndMapsPhases) {
  TempDir dir("acdc");
  const auto p = dir / "patient042";
  std::filesystem::create_directories(p);
  for (int frame : {1, 2, 10, 12}) {
    char name[64];
    std::snprintf(name, sizeof name, "patient042_frame%02d.nii", frame);
    write_nifti(tagged_volume(static_cast<float>(frame)), p / name);
  }
  LabelVolume gt = LabelVolume::zeros({2, 4, 4});
  gt.data[3] = 2;
  write_label_nifti(gt, p / "patient042_frame01_gt.nii");
  write_label_nifti(gt, p / "patient042_frame12_gt.nii");
  std::ofstream(p / "Info.cfg") << "ED: 1\nES: 12\nGroup: NOR\nHeight: 180.0\nNbFrame: 30\n";

  const auto s = read_patient(p);
  EXPECT_EQ(s.patient_id, "patient042");
  ASSERT_EQ(s.length(), 4u);
  EXPECT_EQ(s.frames[0].data[0], 1.0f);
  EXPECT_EQ(s.frames[2].data[0], 10.0f);
  EXPECT_EQ(s.frames[3].data[0], 12.0f);
  EXPECT_EQ(s.ed_index, 0u);
  EXPECT_EQ(s.es_index, 3u);
  EXPECT_TRUE(s.labels[0].has_value());
  EXPECT_FALSE(s.labels[1].has_value());
  EXPECT_EQ(s.labels[3]->data[3], 2);
}

TEST(PatientIo, AcdcPhaseWithoutImageIsRejected) {
  TempDir dir("acdc");
  const auto p = dir / "patient001";
  std::filesystem::create_directories(p);
  write_nifti(tagged_volume(1), p / "patient001_frame01.nii");
  std::ofstream(p / "Info.cfg") << "ED: 1\nES: 9\n";
  EXPECT_THROW(read_patient(p), DataError);
}

TEST(PatientIo, DiagnosesBrokenDirectories) {
  TempDir dir("ds");
  EXPECT_THROW(read_patient(dir / "nothing"), DataError);
  std::filesystem::create_directories(dir / "patient001");
  EXPECT_THROW(read_patient(dir / "patient001"), DataError);
  std::ofstream(dir / "patient001" / "meta.txt") << "ed=0\nes=1\nT=2\n";
  EXPECT_THROW(read_patient(dir / "patient001"), DataError);
  std::ofstream(dir / "patient001" / "meta.txt") << "ed=zero\nes=1\nT=2\n";
  EXPECT_THROW(read_patient(dir / "patient001"), DataError);
}

TEST(PatientIo, MismatchedFrameExtentsAreDataErrors) {
  TempDir dir("ds");
  const auto p = dir / "patient001";
  std::filesystem::create_directories(p);
  write_nifti(tagged_volume(1), p / "frame00.nii");
  write_nifti(Volume::zeros({2, 4, 8}), p / "frame01.nii");
  std::ofstream(p / "meta.txt") << "ed=0\nes=1\nT=2\n";
  EXPECT_THROW(read_patient(p), DataError);
}

TEST(PatientIo, ListsPatientDirectoriesSorted) {
  TempDir dir("ds");
  for (auto name : {"patient010", "patient002", "other", "patient001"})
    std::filesystem::create_directories(dir / name);
  std::ofstream(dir / "patient999") << "file, not a directory";
  EXPECT_EQ(list_patients(dir.path()), (std::vector<std::string>{"patient001", "patient002", "patient010"}));
  EXPECT_THROW(list_patients(dir / "missing"), DataError);
}

TEST(Preprocess, ResamplesFramesAndLabels) {
  auto s = generate_phantom_sequence(PhantomConfig::for_grid(2, {2, 16, 16}, 5));
  const auto out = preprocess(s, {4, 8, 8});
  EXPECT_EQ(out.frames[1].extents.h, 8u);
  EXPECT_EQ(out.labels[1]->extents.d, 4u);
  double mean = 0;
  for (float x : out.frames[0].data) mean += x;
  EXPECT_NEAR(mean / static_cast<double>(out.frames[0].data.size()), 0.0, 1e-5);
  const auto raw = preprocess(s, s.extents(), false);
  EXPECT_EQ(raw.frames[0].data, s.frames[0].data);
}

TEST(Split, SizesFollowSevenTwoOne) {
  for (auto [n, tr, va, te] : std::vector<std::array<std::size_t, 4>>{
           {100, 70, 20, 10}, {10, 7, 2, 1}, {13, 9, 2, 2}, {150, 105, 30, 15}}) {
    const auto s = split_patients(make_ids(n), 1);
    EXPECT_EQ(s.train.size(), tr) << n;
    EXPECT_EQ(s.val.size(), va) << n;
    EXPECT_EQ(s.test.size(), te) << n;
  }
}

TEST(Split, DisjointCoveringAndDeterministic) {
  const auto ids = make_ids(37);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = split_patients(ids, seed);
    std::set<std::string> all;
    for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(part->begin(), part->end());
    EXPECT_EQ(all.size(), ids.size());
    EXPECT_EQ(all, std::set<std::string>(ids.begin(), ids.end()));
  }
  auto reversed = ids;
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_EQ(split_patients(ids, 4).test, split_patients(reversed, 4).test);
  EXPECT_NE(split_patients(ids, 4).train, split_patients(ids, 5).train);
}

TEST(Split, RejectsSmallOrDuplicateCohorts) {
  EXPECT_THROW(split_patients(make_ids(9), 0), ValueError);
  auto ids = make_ids(10);
  ids[3] = ids[4];
  EXPECT_THROW(split_patients(ids, 0), ValueError);
}
