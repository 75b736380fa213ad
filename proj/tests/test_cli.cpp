#include "cli.hpp"

#include "multilat/bench.hpp"
#include "multilat/io.hpp"
#include "multilat/simulate.hpp"
#include "multilat/wav.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace multilat;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Value following "key: " in the command report.
std::string field(const std::string& report, const std::string& key) {
  const auto at = report.find(key + ": ");
  if (at == std::string::npos) return {};
  const auto start = at + key.size() + 2;
  return report.substr(start, report.find('\n', start) - start);
}

Point3 parse_point(const std::string& text) {
  std::istringstream in(text);
  Point3 p;
  in >> p.x() >> p.y() >> p.z();
  return p;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("multilat_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write_scene(const Scene& s, const std::string& name = "scene.json") const {
    SceneFile f{s.mics, s.source, s.sound_speed};
    write_scene_file(path(name), f);
    return path(name);
  }

  fs::path dir_;
};

const char* kBenchConfig = R"({
  "mode": "rd",
  "seed": 4,
  "trials": 2,
  "scenes": {"kind": "lab", "positions": [2]},
  "subsets": {"kind": "all_k_of_m", "k": 5},
  "features": ["vad-raw", "vad-denoised"],
  "methods": ["usrd-ls:nearest-barycenter", "srd-ls:nearest-barycenter", "conic"],
  "noise": [{"kind": "gaussian", "sigma": 0.05}]
})";

}  // namespace

TEST_F(Cli, HelpStatesSignConvention) {
  const CliResult r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("d(m,m') = D(m') - D(m)"), std::string::npos);
  const CliResult sub = run({"localize", "--help"});
  EXPECT_EQ(sub.code, 0);
  EXPECT_NE(sub.out.find("--method"), std::string::npos);
  EXPECT_NE(sub.out.find("D(m') - D(m)"), std::string::npos);
}

TEST_F(Cli, LocalizeNoiselessLabRd) {
  const Scene s = lab_scene(2);
  write_matrix_csv(fs::path(path("rd.csv")), true_rd_full(s).values);
  const CliResult r = run({"localize", "--scene", write_scene(s), "--rd", path("rd.csv"), "--method", "srd-ls"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_LE((parse_point(field(r.out, "position")) - s.source).norm(), 1e-6);
  EXPECT_EQ(field(r.out, "method"), "srd-ls:nearest-barycenter");
  EXPECT_LE(std::stod(field(r.out, "position_error_m")), 1e-6);
  EXPECT_FALSE(field(r.out, "residual").empty());
}

TEST_F(Cli, LocalizeEveryMethodAndDenoise) {
  const Scene s = lab_scene(1);
  RdNoiseModel noise;
  noise.sigma = 0.01;
  noise.seed = 2;
  write_matrix_csv(fs::path(path("rd.csv")), perturb_rd(true_rd_full(s), noise).values);
  for (const char* method : {"usrd-ls", "srd-ls", "conic", "conic-norm", "hyperbolic"}) {
    for (const char* denoise : {"on", "off"}) {
      const CliResult r = run({"localize", "--scene", write_scene(s), "--rd", path("rd.csv"), "--method", method,
                         "--denoise", denoise, "--ref", "index:3"});
      ASSERT_EQ(r.code, 0) << method << ": " << r.err;
      EXPECT_LT(std::stod(field(r.out, "position_error_m")), 0.2) << method;
    }
  }
}

TEST_F(Cli, MissingSceneFileExits2) {
  const CliResult r = run({"localize", "--scene", path("nope.json"), "--rd", path("rd.csv")});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error code=2 ", 0), 0u) << r.err;
}

TEST_F(Cli, FourMicUsrdExits3) {
  std::mt19937_64 rng(91);
  const Scene s = multilat::testing::random_scene(rng, 4);
  write_matrix_csv(fs::path(path("rd.csv")), true_rd_full(s).values);
  const CliResult r = run({"localize", "--scene", write_scene(s), "--rd", path("rd.csv"), "--method", "usrd-ls"});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("insufficient microphones"), std::string::npos) << r.err;
  EXPECT_EQ(r.err.rfind("error code=3 ", 0), 0u);
}

TEST_F(Cli, BadArgumentsExit2) {
  const Scene s = lab_scene(1);
  write_matrix_csv(fs::path(path("rd.csv")), true_rd_full(s).values);
  const std::string scene = write_scene(s);
  EXPECT_EQ(run({"localize", "--scene", scene, "--rd", path("rd.csv"), "--method", "chan-ho"}).code, 2);
  EXPECT_EQ(run({"localize", "--scene", scene, "--rd", path("rd.csv"), "--ref", "loudest"}).code, 2);
  EXPECT_EQ(run({"localize", "--scene", scene}).code, 2);
  EXPECT_EQ(run({"localize", "--scene", scene, "--rd", path("rd.csv"), "--ref", "max-energy"}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  write_matrix_csv(fs::path(path("small.csv")), Eigen::MatrixXd::Zero(3, 3));
  EXPECT_EQ(run({"localize", "--scene", scene, "--rd", path("small.csv")}).code, 2);
}

TEST_F(Cli, BenchWritesParseableDeterministicOutput) {
  write_text_file(path("bench.json"), kBenchConfig);
  const CliResult a = run({"bench", "--config", path("bench.json"), "--out", path("a"), "--threads", "1"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(field(a.out, "cells"), "6");
  EXPECT_EQ(field(a.out, "records"), std::to_string(3 * 2 * 56 * 2));
  EXPECT_FALSE(field(a.out, "elapsed_s").empty());
  const CliResult b = run({"bench", "--config", path("bench.json"), "--out", path("b"), "--threads", "3"});
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(read_text_file(path("a/records.csv")), read_text_file(path("b/records.csv")));

  std::ifstream rec(path("a/records.csv"));
  EXPECT_EQ(read_records_csv(rec).size(), 672u);
  std::ifstream sum(path("a/summary.csv"));
  EXPECT_EQ(read_summary_csv(sum).size(), 6u);
  std::ifstream hist(path("a/histogram.csv"));
  EXPECT_FALSE(read_histogram_csv(hist).empty());
}

TEST_F(Cli, BenchHonoursThreadEnvironment) {
  write_text_file(path("bench.json"), kBenchConfig);
  ::setenv("MULTILAT_THREADS", "2", 1);
  const CliResult a = run({"bench", "--config", path("bench.json"), "--out", path("env")});
  ::setenv("MULTILAT_THREADS", "many", 1);
  const CliResult bad = run({"bench", "--config", path("bench.json"), "--out", path("env2")});
  ::unsetenv("MULTILAT_THREADS");
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(bad.code, 2);
}

TEST_F(Cli, BenchRejectsEmptyMethods) {
  write_text_file(path("bench.json"), R"({"mode": "rd", "methods": [], "noise": [{"sigma": 0.1}]})");
  const CliResult r = run({"bench", "--config", path("bench.json"), "--out", path("out")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("method"), std::string::npos);
}

TEST_F(Cli, TdoaTwoChannelShift) {
  std::mt19937_64 rng(92);
  const auto a = multilat::testing::white_noise(rng, 16000);
  std::vector<double> b(a.size(), 0.0);
  for (std::size_t i = 37; i < a.size(); ++i) b[i] = 0.25 * a[i - 37];
  std::vector<double> a_scaled = a;
  for (auto& x : a_scaled) x *= 0.25;
  write_wav(path("pair.wav"), WavData{16000.0, {a_scaled, b}}, WavFormat::float32);

  const CliResult r = run({"tdoa", "--wav", path("pair.wav"), "--vad", "off", "--no-interpolate", "--out-tdoa",
                     path("t.csv"), "--out-rd", path("r.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const Eigen::MatrixXd t = read_matrix_csv(fs::path(path("t.csv")));
  EXPECT_DOUBLE_EQ(t(0, 1), 0.0023125);
  EXPECT_DOUBLE_EQ(t(1, 0), -0.0023125);
  const Eigen::MatrixXd rd = read_matrix_csv(fs::path(path("r.csv")));
  EXPECT_NEAR(rd(0, 1), 0.0023125 * 343.0, 1e-12);

  const CliResult refined = run({"tdoa", "--wav", path("pair.wav"), "--out-tdoa", path("t2.csv"), "--out-rd",
                           path("r2.csv")});
  ASSERT_EQ(refined.code, 0);
  EXPECT_NEAR(read_matrix_csv(fs::path(path("t2.csv")))(0, 1), 0.0023125, 0.05 / 16000.0);
}

TEST_F(Cli, TdoaInputErrorsExit2) {
  write_wav(path("mono.wav"), WavData{16000.0, {std::vector<double>(4096, 0.1)}});
  EXPECT_EQ(run({"tdoa", "--wav", path("mono.wav")}).code, 2);
  write_wav(path("slow.wav"), WavData{8000.0, {std::vector<double>(4096, 0.1)}});
  EXPECT_EQ(run({"tdoa", "--wav", path("mono.wav"), "--wav", path("slow.wav")}).code, 2);
}

TEST_F(Cli, SimulateThenTdoaThenLocalize) {
  const std::string scene = write_scene(lab_scene(3));
  const CliResult sim = run({"simulate", "--scene", scene, "--out-wav", path("s.wav"), "--snr", "30", "--seed", "7"});
  ASSERT_EQ(sim.code, 0) << sim.err;

  const CliResult td = run({"tdoa", "--wav", path("s.wav"), "--scene", scene, "--out-tdoa", path("t.csv"), "--out-rd",
                      path("r.csv")});
  ASSERT_EQ(td.code, 0) << td.err;
  const RdMatrix rd{read_matrix_csv(fs::path(path("r.csv")))};
  EXPECT_EQ(rd.values.rows(), 8);
  EXPECT_EQ(rd.antisymmetry_error(), 0.0);

  const CliResult from_rd = run({"localize", "--scene", scene, "--rd", path("r.csv"), "--method", "srd-ls"});
  ASSERT_EQ(from_rd.code, 0) << from_rd.err;
  EXPECT_LT(std::stod(field(from_rd.out, "position_error_m")), 0.1);

  const CliResult from_wav = run({"localize", "--scene", scene, "--wav", path("s.wav"), "--method", "srd-ls", "--ref",
                            "max-energy", "--vad", "on"});
  ASSERT_EQ(from_wav.code, 0) << from_wav.err;
  EXPECT_LT(std::stod(field(from_wav.out, "position_error_m")), 0.1);
  EXPECT_EQ(field(from_wav.out, "method"), "srd-ls:max-energy");
}

TEST_F(Cli, SimulateIsSeedDeterministic) {
  const std::string scene = write_scene(lab_scene(1));
  ASSERT_EQ(run({"simulate", "--scene", scene, "--out-wav", path("a.wav"), "--out-rd", path("a.csv"),
                 "--rd-sigma", "0.05", "--seed", "3"})
                .code,
            0);
  ASSERT_EQ(run({"simulate", "--scene", scene, "--out-wav", path("b.wav"), "--out-rd", path("b.csv"),
                 "--rd-sigma", "0.05", "--seed", "3"})
                .code,
            0);
  EXPECT_EQ(read_text_file(path("a.wav")), read_text_file(path("b.wav")));
  EXPECT_EQ(read_text_file(path("a.csv")), read_text_file(path("b.csv")));
  EXPECT_EQ(read_wav(path("a.wav")).channels.size(), 8u);
}
