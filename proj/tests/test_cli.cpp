#include "cli.hpp"

#include "calib/data.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using calib::cli::run;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::map<std::string, std::string> parse_report(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("calib_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenerateIsReproducible) {
  auto r = call({"generate", "--dataset", "moons", "--seed", "7", "--out", path("a")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(parse_report(r.out)["rows"], "12000");
  const auto ds = calib::data::read_csv(path("a/moons.csv"));
  EXPECT_EQ(ds.size(), 12000);
  EXPECT_EQ(calib::data::read_csv(path("a/moons_train.csv")).size(), 10000);
  ASSERT_EQ(call({"generate", "--dataset", "moons", "--seed", "7", "--out", path("b")}).code, 0);
  EXPECT_EQ(slurp(path("a/moons.csv")), slurp(path("b/moons.csv")));
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(call({"generate", "--dataset", "spirals", "--out", path("x")}).code, 2);
  EXPECT_EQ(call({}).code, 2);
  EXPECT_EQ(call({"frobnicate"}).code, 2);
  EXPECT_EQ(call({"generate"}).code, 2);
  EXPECT_EQ(call({"--help"}).code, 0);
  std::ofstream(path("blocker")) << "file";
  EXPECT_EQ(call({"generate", "--dataset", "moons", "--out", path("blocker/sub")}).code, 2);
}

TEST_F(Cli, TrainEvalBaselines) {
  ASSERT_EQ(call({"generate", "--dataset", "gaussians3", "--n", "1200", "--train", "1000", "--out", path("d")}).code, 0);
  for (const std::string model : {"lda", "qda"}) {
    auto t = call({"train", "--data", path("d/gaussians3_train.csv"), "--model", model, "--out", path("m")});
    ASSERT_EQ(t.code, 0) << t.err;
    EXPECT_TRUE(fs::exists(path("m/" + model + ".ckpt")));
    EXPECT_TRUE(fs::exists(path("m/" + model + "_report.txt")));
    auto e = call({"eval", "--checkpoint", path("m/" + model + ".ckpt"), "--data", path("d/gaussians3_test.csv")});
    ASSERT_EQ(e.code, 0) << e.err;
    auto kv = parse_report(e.out);
    EXPECT_TRUE(kv.count("cmc"));
    EXPECT_TRUE(kv.count("accuracy"));
    EXPECT_FALSE(kv.count("cllr"));
    EXPECT_GT(std::stod(kv["accuracy"]), 0.8);
    EXPECT_EQ(e.out, call({"eval", "--checkpoint", path("m/" + model + ".ckpt"), "--data",
                          path("d/gaussians3_test.csv")}).out);
  }
}

TEST_F(Cli, TrainCdaBinaryAndEval) {
  ASSERT_EQ(call({"generate", "--dataset", "moons", "--n", "1200", "--train", "1000", "--out", path("d")}).code, 0);
  std::ofstream(path("cfg")) << "# short run\nepochs = 12\nlearning_rate = 3e-3\nbatch_size = 128\n";
  auto t = call({"train", "--data", path("d/moons_train.csv"), "--model", "cda", "--config", path("cfg"), "--seed", "3",
                 "--out", path("m")});
  ASSERT_EQ(t.code, 0) << t.err;
  auto kv = parse_report(t.out);
  EXPECT_GE(std::stod(kv["loss_decrease"]), 0.2);
  EXPECT_TRUE(fs::exists(path("m/cda_loss.csv")));
  auto e = call({"eval", "--checkpoint", path("m/cda.ckpt"), "--data", path("d/moons_test.csv")});
  ASSERT_EQ(e.code, 0) << e.err;
  kv = parse_report(e.out);
  for (const char* key : {"cllr", "cllr_min", "cllr_cal", "eer", "divergences", "sigma"}) EXPECT_TRUE(kv.count(key)) << key;

  auto s = call({"score", "--checkpoint", path("m/cda.ckpt"), "--data", path("d/moons_test.csv"), "--llr", "--out",
                 path("s")});
  ASSERT_EQ(s.code, 0) << s.err;
  auto es = parse_report(call({"eval", "--scores", path("s/scores.csv")}).out);
  EXPECT_EQ(es["cllr"], kv["cllr"]);

  for (const std::string kind : {"scatter", "hist", "grid"}) {
    auto p = call({"plot", "--kind", kind, "--checkpoint", path("m/cda.ckpt"), "--data", path("d/moons_test.csv"),
                   "--out", path("p")});
    EXPECT_EQ(p.code, 0) << p.err;
  }
  EXPECT_TRUE(fs::exists(path("p/scatter.svg")));
  EXPECT_TRUE(fs::exists(path("p/hist_0_1.csv")));
  EXPECT_TRUE(fs::exists(path("p/grid.csv")));

  auto i = call({"interpolate", "--checkpoint", path("m/cda.ckpt"), "--i", "0", "--j", "1", "--out", path("i")});
  ASSERT_EQ(i.code, 0) << i.err;
  std::ifstream in(path("i/interp_0_1.csv"));
  std::string line;
  std::vector<std::string> alphas;
  std::getline(in, line);
  while (std::getline(in, line)) alphas.push_back(line.substr(0, line.find(',')));
  EXPECT_EQ(alphas, (std::vector<std::string>{"0", "0.1", "0.2", "0.3", "0.4", "0.5", "0.6", "0.7", "0.8", "0.9", "1"}));
}

TEST_F(Cli, ConfigAndSchemaErrors) {
  ASSERT_EQ(call({"generate", "--dataset", "moons", "--n", "100", "--train", "80", "--out", path("d")}).code, 0);
  std::ofstream(path("bad.cfg")) << "epochs=2\nwarp_speed=9\n";
  EXPECT_EQ(call({"train", "--data", path("d/moons_train.csv"), "--model", "cda", "--config", path("bad.cfg"), "--out",
                  path("m")}).code, 2);
  EXPECT_EQ(call({"train", "--data", path("d/moons_train.csv"), "--model", "svm", "--out", path("m")}).code, 2);
  std::ofstream(path("nolabel.csv")) << "f1,f2\n0.1,0.2\n";
  EXPECT_EQ(call({"train", "--data", path("nolabel.csv"), "--model", "lda", "--out", path("m")}).code, 3);
  EXPECT_EQ(call({"train", "--data", path("absent.csv"), "--model", "lda", "--out", path("m")}).code, 2);
}

TEST_F(Cli, Theory) {
  auto r = call({"theory", "--D", "2"});
  ASSERT_EQ(r.code, 0);
  auto kv = parse_report(r.out);
  EXPECT_NEAR(std::stod(kv["mu_0"]), 1.0 / std::sqrt(2.0), 1e-9);
  EXPECT_EQ(kv["divergences"], "0,1;1,0");

  std::ofstream(path("delta")) << "0 6 6\n6 0 6\n6 6 0\n";
  kv = parse_report(call({"theory", "--divergences", path("delta")}).out);
  for (const char* key : {"eer_0_1", "eer_0_2", "eer_1_2"}) EXPECT_NEAR(std::stod(kv[key]), 0.0416, 5e-4);
  for (const char* key : {"A", "B", "M", "mu_2", "quadratic_forms"}) EXPECT_TRUE(kv.count(key)) << key;

  std::ofstream(path("bad")) << "1 2\n2 1\n";
  r = call({"theory", "--sigma", path("bad")});
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("NotSPD"), std::string::npos);
  std::ofstream(path("s")) << "1 0\n0 1\n";
  EXPECT_EQ(call({"theory", "--D", "4", "--sigma", path("s")}).code, 2);
}
