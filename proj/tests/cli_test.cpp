#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "mnvc/mnvc.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int status = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(MNVC_CLI) + " " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  for (std::string f; std::getline(is, f, '\t');) out.push_back(f);
  return out;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("mnvc_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }
  static std::string path(const std::string& name) { return (dir_ / name).string(); }
  static fs::path dir_;
};
fs::path Cli::dir_;

}  // namespace

TEST_F(Cli, EncodeDecodeMetricsOnNoiseClip) {
  std::mt19937 rng(16);
  {
    std::ofstream f(path("noise.rgb"), std::ios::binary);
    for (int i = 0; i < 16 * 128 * 128 * 3; ++i) f.put(static_cast<char>(rng() & 0xFF));
  }
  auto r = run("gen-weights --config " + std::string(MNVC_SOURCE_DIR) + "/configs/default.json --seed 1 --output " +
               path("w.bin"));
  ASSERT_EQ(r.status, 0) << r.out;
  r = run("encode --input " + path("noise.rgb") + " --width 128 --height 128 --weights " + path("w.bin") +
          " --gop 8 --partitions 4 --output " + path("s.mnvc"));
  ASSERT_EQ(r.status, 0) << r.out;
  r = run("decode --input " + path("s.mnvc") + " --weights " + path("w.bin") + " --output " + path("out.rgb") +
          " --time");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("time_p95_ms"), std::string::npos);
  r = run("metrics --ref " + path("noise.rgb") + " --test " + path("out.rgb") + " --width 128 --height 128 --stream " +
          path("s.mnvc"));
  ASSERT_EQ(r.status, 0) << r.out;
  const auto ls = lines(r.out);
  ASSERT_EQ(ls.size(), 2u) << r.out;
  EXPECT_EQ(ls[0], "MSSSIM\tPSNR\tBPP\tFrames\tTime");
  const auto f = fields(ls[1]);
  ASSERT_EQ(f.size(), 5u);
  EXPECT_GT(std::stod(f[2]), 0.0);
  EXPECT_EQ(f[3], "16");
  const double expected_bpp = 8.0 * static_cast<double>(fs::file_size(path("s.mnvc"))) / (128.0 * 128.0 * 16.0);
  EXPECT_NEAR(std::stod(f[2]), expected_bpp, 1e-4);

  // A reconstruction against itself hits the PSNR cap.
  r = run("metrics --ref " + path("out.rgb") + " --test " + path("out.rgb") + " --width 128 --height 128");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_EQ(fields(lines(r.out)[1])[1], "99.00");
}

TEST_F(Cli, PpmDirectoryAndOddDims) {
  const std::string tiny = std::string(MNVC_SOURCE_DIR) + "/configs/tiny.json";
  ASSERT_EQ(run("gen-weights --config " + tiny + " --seed 2 --output " + path("t.bin")).status, 0);
  ASSERT_EQ(run("encode --input " + std::string(MNVC_TEST_DATA) + "/clip.ppm --weights " + path("t.bin") +
                " --gop 3 --partitions 2 --output " + path("c.mnvc"))
                .status,
            0);
  auto r = run("decode --input " + path("c.mnvc") + " --weights " + path("t.bin") + " --output " + path("frames/"));
  ASSERT_EQ(r.status, 0) << r.out;
  const mnvc::RawVideo v = mnvc::load_video(path("frames"));
  EXPECT_EQ(v.frames.size(), 6u);
  EXPECT_EQ(v.width, 80);
  EXPECT_EQ(v.height, 56);
}

TEST_F(Cli, ReportShowsCheaperReceiver) {
  auto r = run("report --config " + std::string(MNVC_SOURCE_DIR) + "/configs/default.json");
  ASSERT_EQ(r.status, 0) << r.out;
  double sender = -1, receiver = -1;
  for (const auto& l : lines(r.out)) {
    std::istringstream is(l);
    std::string a, b, params, ppct, kmacs;
    if (l.find("Total receiver") != std::string::npos) {
      is >> a >> b >> params >> ppct >> kmacs;
      receiver = std::stod(kmacs);
    } else if (l.find("Total") != std::string::npos) {
      is >> a >> params >> ppct >> kmacs;
      sender = std::stod(kmacs);
    }
  }
  const auto rep = mnvc::count_complexity(mnvc::CodecConfig::default_config());
  EXPECT_NEAR(sender, mnvc::total_kmacs(rep.sender), 0.05);
  EXPECT_NEAR(receiver, mnvc::total_kmacs(rep.receiver), 0.05);
  EXPECT_LT(receiver, sender);
}

TEST_F(Cli, FailuresExitNonzeroWithOneLine) {
  auto r = run("decode --input " + path("missing.mnvc") + " --weights " + path("missing.bin") + " --output " +
               path("x.rgb"));
  EXPECT_NE(r.status, 0);
  EXPECT_EQ(lines(r.out).size(), 1u) << r.out;
  {
    std::ofstream f(path("bad.mnvc"), std::ios::binary);
    f << "NOTASTREAM-------------------------------------------";
  }
  const std::string tiny = std::string(MNVC_SOURCE_DIR) + "/configs/tiny.json";
  ASSERT_EQ(run("gen-weights --config " + tiny + " --seed 2 --output " + path("t2.bin")).status, 0);
  r = run("decode --input " + path("bad.mnvc") + " --weights " + path("t2.bin") + " --output " + path("x.rgb"));
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.out.find("format error"), std::string::npos) << r.out;
  EXPECT_EQ(lines(r.out).size(), 1u) << r.out;
  r = run("decode --input " + std::string(MNVC_TEST_DATA) + "/tiny_gop2.mnvc --weights " + path("t2.bin") +
          " --output " + path("x.rgb"));
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.out.find("checksum"), std::string::npos) << r.out;
  r = run("encode --input " + std::string(MNVC_TEST_DATA) + "/clip.ppm --weights " + path("t2.bin") +
          " --gop 0 --output " + path("y.mnvc"));
  EXPECT_EQ(r.status, 0) << r.out;  // 0 selects the config default
  r = run("bogus");
  EXPECT_NE(r.status, 0);
}

TEST_F(Cli, WorkerCountFromEnvironmentDoesNotChangeBytes) {
  const std::string tiny = std::string(MNVC_SOURCE_DIR) + "/configs/tiny.json";
  ASSERT_EQ(run("gen-weights --config " + tiny + " --seed 2 --output " + path("t3.bin")).status, 0);
  const std::string enc = "encode --input " + std::string(MNVC_TEST_DATA) + "/clip.ppm --weights " + path("t3.bin") +
                          " --gop 2 --partitions 4 --output ";
  ASSERT_EQ(run(enc + path("w1.mnvc")).status, 0);
  ::setenv("NVC_WORKERS", "4", 1);
  ASSERT_EQ(run(enc + path("w4.mnvc")).status, 0);
  ::unsetenv("NVC_WORKERS");
  EXPECT_EQ(mnvc::read_file(path("w1.mnvc")), mnvc::read_file(path("w4.mnvc")));
}
