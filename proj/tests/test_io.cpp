#include <gtest/gtest.h>

#include <filesystem>
#include <algorithm>
#include <cstring>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "svls/io.hpp"
#include "svls/softlabel.hpp"

using namespace svls;
namespace fs = std::filesystem;

namespace {

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("svls_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  static std::string bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  }
  static void put(const fs::path& p, const std::string& b) {
    std::ofstream(p, std::ios::binary) << b;
  }

  fs::path dir_;
};

ErrorKind kind_of(const fs::path& p, std::string* field = nullptr) {
  try {
    read_volume(p);
  } catch (const Error& e) {
    if (field) *field = e.field();
    return e.kind();
  }
  ADD_FAILURE() << "read succeeded";
  return ErrorKind::io;
}

}  // namespace

TEST_F(IoTest, LabelRoundTripIsBitExact) {
  std::mt19937_64 rng(1);
  const auto labels = oracle::random_labels(rng, Geometry::volumetric(5, 6, 7, {1.0, 0.5, 3.22}), 4);
  write_volume(labels, dir_ / "a.svlv");
  const auto back = read_labels(dir_ / "a.svlv");
  EXPECT_EQ(back, labels);
  write_volume(back, dir_ / "b.svlv");
  EXPECT_EQ(bytes(dir_ / "a.svlv"), bytes(dir_ / "b.svlv"));
  EXPECT_EQ(bytes(dir_ / "a.svlv.json"), bytes(dir_ / "b.svlv.json"));
  EXPECT_EQ(bytes(dir_ / "a.svlv").size(), 8 + 12 + 210u);
}

TEST_F(IoTest, ProbabilityAndScoreRoundTrip) {
  std::mt19937_64 rng(2);
  const auto g = Geometry::planar(9, 4, 1.62, 1.62);
  const auto p = svls_smooth(oracle::random_labels(rng, g, 3), svls_weights(2));
  SidecarMeta meta;
  meta.class_names = {{0, "background"}, {1, "kidney"}, {2, "tumor"}};
  meta.provenance = Provenance{"svls", std::nullopt, 1.0, {}, kToolVersion};
  write_volume(p, dir_ / "p.svlv", meta);
  const auto file = read_volume_file(dir_ / "p.svlv");
  EXPECT_EQ(std::get<SoftLabelVolume>(file.volume), p);
  EXPECT_EQ(file.meta.class_names, meta.class_names);
  EXPECT_EQ(file.meta.provenance, meta.provenance);

  const LogitVolume logits(g, 2, std::vector<float>(72, -3.5f));
  write_volume(logits, dir_ / "s.svlv");
  EXPECT_EQ(read_logits(dir_ / "s.svlv"), logits);
  EXPECT_EQ(bytes(dir_ / "s.svlv")[6], '\x02');
}

TEST_F(IoTest, HeaderIsLittleEndian) {
  const LabelVolume l(Geometry::volumetric(2, 1, 258), 2, Label{1});
  write_volume(l, dir_ / "h.svlv");
  const std::string b = bytes(dir_ / "h.svlv");
  EXPECT_EQ(b.substr(0, 4), "SVLV");
  EXPECT_EQ(b.substr(4, 4), std::string("\x01\x00\x00\x03", 4));
  EXPECT_EQ(b.substr(16, 4), std::string("\x02\x01\x00\x00", 4));
}

TEST_F(IoTest, SparseLabelValuesRemap) {
  const auto g = Geometry::planar(1, 4);
  const LabelVolume dense(g, 4, std::vector<Label>{0, 1, 2, 3});
  SidecarMeta meta;
  meta.label_values = {0, 1, 2, 4};
  write_volume(dense, dir_ / "brats.svlv", meta);
  EXPECT_EQ(bytes(dir_ / "brats.svlv").substr(16), std::string("\x00\x01\x02\x04", 4));
  EXPECT_EQ(read_labels(dir_ / "brats.svlv"), dense);

  std::string b = bytes(dir_ / "brats.svlv");
  b[18] = 3;  // not in the table
  put(dir_ / "brats.svlv", b);
  EXPECT_EQ(kind_of(dir_ / "brats.svlv"), ErrorKind::validation);
}

TEST_F(IoTest, MissingSidecarInfersClasses) {
  const LabelVolume l(Geometry::planar(2, 2), 5, std::vector<Label>{0, 3, 1, 0});
  write_volume(l, dir_ / "x.svlv");
  fs::remove(dir_ / "x.svlv.json");
  const auto back = read_labels(dir_ / "x.svlv");
  EXPECT_EQ(back.num_classes(), 4u);
  EXPECT_EQ(back.geometry().spacing_mm(), (std::vector<double>{1.0, 1.0}));
}

TEST_F(IoTest, HeaderErrorsNameTheField) {
  const LabelVolume l(Geometry::planar(2, 2), 2, Label{1});
  write_volume(l, dir_ / "ok.svlv");
  const std::string good = bytes(dir_ / "ok.svlv");
  struct Case {
    std::size_t offset;
    char value;
    const char* field;
  };
  for (const auto& c : {Case{0, 'X', "magic"}, Case{4, 2, "version"}, Case{6, 9, "dtype"},
                        Case{7, 4, "rank"}, Case{8, 0, "dims"}}) {
    std::string b = good;
    b[c.offset] = c.value;
    if (c.offset == 0) b.replace(0, 4, "XXXX");
    if (c.offset == 8) b.replace(8, 4, std::string(4, '\0'));
    put(dir_ / "bad.svlv", b);
    std::string field;
    EXPECT_EQ(kind_of(dir_ / "bad.svlv", &field), ErrorKind::format) << c.field;
    EXPECT_EQ(field, c.field);
  }
  std::string field;
  put(dir_ / "bad.svlv", good.substr(0, good.size() - 1));
  EXPECT_EQ(kind_of(dir_ / "bad.svlv", &field), ErrorKind::format);
  EXPECT_EQ(field, "payload");
  put(dir_ / "bad.svlv", good + "z");
  EXPECT_EQ(kind_of(dir_ / "bad.svlv", &field), ErrorKind::format);
  put(dir_ / "bad.svlv", "SV");
  EXPECT_EQ(kind_of(dir_ / "bad.svlv", &field), ErrorKind::format);
  EXPECT_EQ(kind_of(dir_ / "missing.svlv"), ErrorKind::io);
}

TEST_F(IoTest, CorruptProbabilitySumNamesFirstBadVoxel) {
  const auto g = Geometry::planar(2, 3);
  const auto p = one_hot_encode(LabelVolume(g, 2, Label{0}));
  write_volume(p, dir_ / "p.svlv");
  std::string b = bytes(dir_ / "p.svlv");
  // Voxel 4 of class 1 sits at payload offset 4 * (6 + 4).
  const std::size_t payload = 8 + 8 + 4;
  const float bumped = 0.1f;
  std::memcpy(b.data() + payload + 4 * 10, &bumped, 4);
  put(dir_ / "p.svlv", b);
  std::string field;
  EXPECT_EQ(kind_of(dir_ / "p.svlv", &field), ErrorKind::validation);
  EXPECT_EQ(field, "voxel[4] at (1,1)");
}

TEST_F(IoTest, SidecarValidation) {
  const LabelVolume l(Geometry::planar(2, 2), 2, Label{1});
  write_volume(l, dir_ / "v.svlv");
  put(dir_ / "v.svlv.json", R"({"spacing":[1.0,-2.0],"num_classes":2})");
  EXPECT_EQ(kind_of(dir_ / "v.svlv"), ErrorKind::validation);
  put(dir_ / "v.svlv.json", R"({"spacing":[1.0,1.0,1.0],"num_classes":2})");
  EXPECT_EQ(kind_of(dir_ / "v.svlv"), ErrorKind::validation);
  put(dir_ / "v.svlv.json", R"({"spacing":[1.0,1.0],"num_classes":2,"class_names":{"5":"x"}})");
  EXPECT_EQ(kind_of(dir_ / "v.svlv"), ErrorKind::validation);
  put(dir_ / "v.svlv.json", "{not json");
  EXPECT_EQ(kind_of(dir_ / "v.svlv"), ErrorKind::format);
}

TEST_F(IoTest, ReportsCsvAndJson) {
  CalibrationReport r;
  r.bins.resize(15);
  for (std::size_t b = 0; b < 15; ++b) {
    r.bins[b].lower = double(b) / 15;
    r.bins[b].upper = double(b + 1) / 15;
  }
  r.bins[14] = {14.0 / 15, 1.0, 3, 0.95123456789, 1.0};
  r.population = 3;
  r.ece = 0.0487654321;
  write_report(r, dir_ / "rel.csv", ReportFormat::csv);
  const std::string csv = bytes(dir_ / "rel.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 16);
  EXPECT_NE(csv.find("0,0.0666667,0,,\n"), std::string::npos);
  EXPECT_NE(csv.find("0.933333,1,3,0.951235,1\n"), std::string::npos);

  write_report(r, dir_ / "cal.json", ReportFormat::json);
  const auto j = nlohmann::json::parse(bytes(dir_ / "cal.json"));
  EXPECT_EQ(j["ece"].get<double>(), 0.0487654);
  EXPECT_TRUE(j["bins"][0]["accuracy"].is_null());
  EXPECT_EQ(j["bins"].size(), 15u);

  SegmentationScores s{{{"0", 1.0, 1.0}, {"1", 0.5, 0.75}, {"2", 0.123456789, 0.0}}, 2.0};
  write_report(s, dir_ / "seg.csv", ReportFormat::csv);
  EXPECT_EQ(bytes(dir_ / "seg.csv"), "class,dsc,sd\n0,1,1\n1,0.5,0.75\n2,0.123457,0\n");
  write_report(s, dir_ / "seg.json", ReportFormat::json);
  const auto sj = nlohmann::json::parse(bytes(dir_ / "seg.json"));
  EXPECT_EQ(sj["classes"].size(), 3u);
  EXPECT_EQ(sj["classes"][2]["dsc"].get<double>(), 0.123457);
}

TEST_F(IoTest, WritesLeaveNoTemporaries) {
  const LabelVolume l(Geometry::planar(2, 2), 2, Label{1});
  write_volume(l, dir_ / "t.svlv");
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir_)) {
    ++files;
    EXPECT_EQ(e.path().string().find(".tmp"), std::string::npos);
  }
  EXPECT_EQ(files, 2u);
  EXPECT_THROW(write_volume(l, dir_ / "no_such_dir" / "t.svlv"), Error);
}
