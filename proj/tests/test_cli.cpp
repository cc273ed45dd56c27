#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "test_util.hpp"

namespace awsrn {
namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun cli(const std::string& args) {
  const std::string cmd = std::string(AWSRN_CLI) + " " + args + " 2>&1";
  CliRun r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string line_with(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (line.starts_with(prefix)) return line;
  return {};
}

double number_after(const std::string& text, const std::string& prefix) {
  const std::string line = line_with(text, prefix);
  return line.empty() ? std::nan("") : std::stod(line.substr(prefix.size()));
}

TEST(CliAnalyze, MatchesGoldenTable) {
  // Golden totals for the x2 presets, each within table rounding of the
  // published 397K/91.2G, 348K/79.6G, 1063K/244.1G and 1397K/320.5G.
  std::string summary;
  for (const char* m : {"awsrn-s", "awsrn-sd", "awsrn-m", "awsrn"}) {
    const CliRun r = cli(std::string("analyze --model ") + m + " --scale 2");
    ASSERT_EQ(r.code, 0) << r.out;
    summary += std::string(m) + "\n" + line_with(r.out, "params:") + "\n" +
               line_with(r.out, "multi-adds:") + "\n";
  }
  EXPECT_EQ(summary, read_text(std::string(GOLDEN_DIR) + "/analyze_x2.txt"));
}

TEST(CliAnalyze, ScaleEightAndCsv) {
  test::TempDir dir("cli");
  const CliRun r = cli("analyze --model awsrn --scale 8 --csv " + dir.file("a.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(line_with(r.out, "multi-adds:").find("(33.7G)"), std::string::npos) << r.out;
  const std::string csv = read_text(dir.file("a.csv"));
  EXPECT_TRUE(csv.starts_with("layer,params,mult_adds\n")) << csv.substr(0, 40);
}

TEST(CliAnalyze, OutputSizeScalesLinearly) {
  const CliRun a = cli("analyze --model awsrn-s --scale 2");
  const CliRun b = cli("analyze --model awsrn-s --scale 2 --out-size 2560x1440");
  ASSERT_EQ(b.code, 0) << b.out;
  EXPECT_EQ(number_after(b.out, "multi-adds:"), 4.0 * number_after(a.out, "multi-adds:"));
  EXPECT_NE(cli("analyze --model awsrn-s --out-size 12by4").code, 0);
}

TEST(CliAnalyze, UnknownPresetListsValidOnes) {
  const CliRun r = cli("analyze --model awsrn-xl --scale 2");
  EXPECT_NE(r.code, 0);
  EXPECT_TRUE(r.out.starts_with("error: config:")) << r.out;
  EXPECT_NE(r.out.find("awsrn-s, awsrn-sd, awsrn-m, awsrn"), std::string::npos) << r.out;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 1);
}

TEST(CliConfig, FileAndFlags) {
  test::TempDir dir("cli");
  std::ofstream(dir.file("c.cfg")) << "# small model\nmodel = awsrn-sd\nscale = 3\n";
  CliRun r = cli("analyze --config " + dir.file("c.cfg"));
  EXPECT_NE(r.out.find("model: awsrn-sd"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("scale: 3"), std::string::npos) << r.out;
  r = cli("analyze --config " + dir.file("c.cfg") + " --scale 4");
  EXPECT_NE(r.out.find("scale: 4"), std::string::npos) << r.out;
  std::ofstream(dir.file("bad.cfg")) << "model = awsrn-s\nwidth = 3\n";
  r = cli("analyze --config " + dir.file("bad.cfg"));
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.out.find("unknown key 'width'"), std::string::npos) << r.out;
}

class CliWork : public ::testing::Test {
 protected:
  void SetUp() override {
    std::filesystem::create_directories(dir.file("data"));
    save_png(test::scene_image(40, 40, 2), dir.file("data/img.png"));
    std::ofstream(dir.file("tiny.cfg")) << "model = awsrn-s\nscale = 2\nn_lfb = 1\nn_awru = 1\n"
                                        << "c_feat = 8\nc_wide = 32\nbatch = 2\npatch = 8\n";
  }
  std::string tiny() { return "--config " + dir.file("tiny.cfg"); }
  test::TempDir dir{"cli"};
};

TEST_F(CliWork, ZeroIterationTrainEqualsInit) {
  ASSERT_EQ(cli("init " + tiny() + " --seed 5 --out " + dir.file("init.awsr")).code, 0);
  const CliRun r = cli("train " + tiny() + " --seed 5 --iters 0 --data " + dir.file("data") +
                    " --out " + dir.file("t0.awsr"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(test::read_bytes(dir.file("init.awsr")), test::read_bytes(dir.file("t0.awsr")));
}

TEST_F(CliWork, SameSeedSameTrace) {
  for (const char* name : {"a", "b"}) {
    const CliRun r = cli("train " + tiny() + " --seed 3 --iters 6 --data " + dir.file("data") +
                      " --out " + dir.file(std::string(name) + ".awsr"));
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("psnr gain:"), std::string::npos);
  }
  const std::string a = read_text(dir.file("a.awsr.trace.txt"));
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 6);
  EXPECT_EQ(a, read_text(dir.file("b.awsr.trace.txt")));
  EXPECT_EQ(test::read_bytes(dir.file("a.awsr")), test::read_bytes(dir.file("b.awsr")));
}

TEST_F(CliWork, ResumeContinuesTheTrace) {
  ASSERT_EQ(cli("train " + tiny() + " --iters 3 --data " + dir.file("data") + " --out " +
                dir.file("r0.awsr")).code, 0);
  const CliRun r = cli("train " + tiny() + " --iters 2 --start-iter 3 --resume " + dir.file("r0.awsr") +
                    " --data " + dir.file("data") + " --out " + dir.file("r1.awsr"));
  ASSERT_EQ(r.code, 0) << r.out;
  std::istringstream trace(read_text(dir.file("r1.awsr.trace.txt")));
  std::size_t it;
  double loss;
  trace >> it >> loss;
  EXPECT_EQ(it, 3u);
  const CliRun bad = cli("train --model awsrn-m --iters 1 --resume " + dir.file("r0.awsr") +
                      " --data " + dir.file("data") + " --out " + dir.file("r2.awsr"));
  EXPECT_TRUE(bad.out.starts_with("error: checkpoint-registry:")) << bad.out;
}

TEST_F(CliWork, SuperResolveShapeAndDeterminism) {
  auto cfg = test::tiny_config(3);
  save_checkpoint(AwsrnModel<float>::build(cfg, 2), dir.file("x3.awsr"));
  save_png(test::scene_image(12, 14, 4), dir.file("in.png"));
  for (const char* out : {"o1.png", "o2.png"}) {
    const CliRun r = cli("sr --ckpt " + dir.file("x3.awsr") + " --in " + dir.file("in.png") + " --out " +
                      dir.file(out));
    ASSERT_EQ(r.code, 0) << r.out;
  }
  const Image o = load_png(dir.file("o1.png"));
  EXPECT_EQ(o.width, 36u);
  EXPECT_EQ(o.height, 42u);
  EXPECT_EQ(test::read_bytes(dir.file("o1.png")), test::read_bytes(dir.file("o2.png")));
  const CliRun bad = cli("sr --scale 2 --ckpt " + dir.file("x3.awsr") + " --in " + dir.file("in.png") +
                      " --out " + dir.file("o3.png"));
  EXPECT_NE(bad.code, 0);
  EXPECT_NE(bad.out.find("scale mismatch"), std::string::npos) << bad.out;
  EXPECT_TRUE(cli("sr --ckpt " + dir.file("nope.awsr") + " --in " + dir.file("in.png") + " --out " +
                  dir.file("o4.png")).out.starts_with("error: checkpoint-io:"));
}

TEST_F(CliWork, AllZeroCheckpointIsBlack) {
  auto m = AwsrnModel<float>::build(test::tiny_config(2), 1);
  for (auto& p : m.params()) p.value().fill(0.0f);
  save_checkpoint(m, dir.file("zero.awsr"));
  const CliRun r = cli("sr --ckpt " + dir.file("zero.awsr") + " --in " + dir.file("data/img.png") +
                    " --out " + dir.file("z.png"));
  ASSERT_EQ(r.code, 0) << r.out;
  const Image z = load_png(dir.file("z.png"));
  EXPECT_EQ(z.width, 80u);
  for (auto v : z.samples) ASSERT_EQ(v, 0);
}

TEST_F(CliWork, EvalReportsRowsAndShaveErrors) {
  save_checkpoint(AwsrnModel<float>::build(test::tiny_config(2), 1), dir.file("m.awsr"));
  CliRun r = cli("eval --ckpt " + dir.file("m.awsr") + " --hr-dir " + dir.file("data") + " --csv " +
              dir.file("e.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(line_with(r.out, "img.png"), "");
  EXPECT_NE(line_with(r.out, "mean"), "");
  EXPECT_TRUE(read_text(dir.file("e.csv")).starts_with("image,psnr,ssim,bicubic_psnr,bicubic_ssim"));
  r = cli("eval --shave 40 --ckpt " + dir.file("m.awsr") + " --hr-dir " + dir.file("data"));
  EXPECT_NE(line_with(r.out, "img.png").find("error:"), std::string::npos) << r.out;
  std::filesystem::create_directories(dir.file("empty"));
  r = cli("eval --ckpt " + dir.file("m.awsr") + " --hr-dir " + dir.file("empty"));
  EXPECT_NE(r.code, 0);
  EXPECT_TRUE(r.out.starts_with("error: data:")) << r.out;
}

TEST_F(CliWork, InspectFreshSmallPreset) {
  ASSERT_EQ(cli("init --model awsrn-s --scale 2 --out " + dir.file("s.awsr")).code, 0);
  const CliRun r = cli("inspect --ckpt " + dir.file("s.awsr") + " --csv " + dir.file("w.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string csv = read_text(dir.file("w.csv"));
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  int units = 0, branches = 0;
  while (std::getline(in, line)) {
    if (line.starts_with("awru,")) {
      ++units;
      EXPECT_TRUE(line.ends_with(",1,1,")) << line;
    } else if (line.starts_with("branch,")) {
      ++branches;
      EXPECT_TRUE(line.ends_with(",0.25")) << line;
    } else {
      EXPECT_TRUE(line.starts_with("lfb,") && line.ends_with(",1,1,")) << line;
    }
  }
  EXPECT_EQ(units, 4);
  EXPECT_EQ(branches, 4);
}

TEST_F(CliWork, PruneThresholds) {
  auto m = AwsrnModel<float>::build(preset("awsrn-s", 2), 1);
  const float alphas[] = {0.1282f, 0.0211f, -0.0003f, 0.0173f};
  const char* ks[] = {"3", "5", "7", "9"};
  for (int i = 0; i < 4; ++i) m.params().at(std::string("awms.k") + ks[i] + ".alpha").value()[0] = alphas[i];
  save_checkpoint(m, dir.file("b.awsr"));

  CliRun r = cli("prune --ckpt " + dir.file("b.awsr") + " --threshold 0 --out " + dir.file("p0.awsr"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("removed: []"), std::string::npos) << r.out;
  EXPECT_EQ(test::read_bytes(dir.file("b.awsr")), test::read_bytes(dir.file("p0.awsr")));

  r = cli("prune --ckpt " + dir.file("b.awsr") + " --threshold 0.01 --out " + dir.file("p1.awsr"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("removed: [7]"), std::string::npos) << r.out;
  const std::size_t drop = 12u * 32 * 49 + 12 + 12 + 1;
  EXPECT_NE(r.out.find("params: 397482 -> " + std::to_string(397482 - drop)), std::string::npos) << r.out;
  EXPECT_EQ(peek_checkpoint_config(dir.file("p1.awsr")).awms_kernels, (std::vector<int>{3, 5, 9}));

  r = cli("prune --ckpt " + dir.file("b.awsr") + " --threshold 0.5 --out " + dir.file("p2.awsr"));
  EXPECT_NE(r.code, 0);
  EXPECT_TRUE(r.out.starts_with("error: prune:")) << r.out;
  EXPECT_FALSE(std::filesystem::exists(dir.file("p2.awsr")));
}

TEST(CliOverfit, TrainThenEvalBeatsBicubic) {
  // Single 96x96 crop, tiny model, 2000 iterations, then score through eval.
  test::TempDir dir("overfit");
  std::filesystem::create_directories(dir.file("data"));
  save_png(test::scene_image(96, 96, 1), dir.file("data/crop.png"));
  std::ofstream(dir.file("of.cfg")) << "model = awsrn-s\nscale = 2\nn_lfb = 1\nn_awru = 1\nc_feat = 8\n"
                                    << "c_wide = 32\nlr0 = 5e-3\nhalve_every = 500\nbatch = 1\n"
                                    << "patch = 48\nmax_iters = 2000\nseed = 7\n";
  const CliRun t = cli("train --config " + dir.file("of.cfg") + " --data " + dir.file("data") +
                    " --out " + dir.file("of.awsr"));
  ASSERT_EQ(t.code, 0) << t.out;
  EXPECT_GE(number_after(t.out, "psnr gain:"), 3.0) << t.out;

  const CliRun e = cli("eval --ckpt " + dir.file("of.awsr") + " --hr-dir " + dir.file("data"));
  ASSERT_EQ(e.code, 0) << e.out;
  std::istringstream row(line_with(e.out, "crop.png"));
  std::string name;
  double psnr_sr, ssim_sr, psnr_bic, ssim_bic;
  row >> name >> psnr_sr >> ssim_sr >> psnr_bic >> ssim_bic;
  EXPECT_GE(psnr_sr, psnr_bic + 3.0) << e.out;
  EXPECT_GT(ssim_sr, ssim_bic);
  EXPECT_NEAR(psnr_sr, number_after(t.out, "train psnr:"), 1e-4);
}

}  // namespace
}  // namespace awsrn
