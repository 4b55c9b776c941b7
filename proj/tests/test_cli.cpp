#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "granular/cli.hpp"

namespace fs = std::filesystem;
using namespace granular;

namespace {

struct Output {
  int code;
  std::string out, err;
};

Output invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "granular");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("granular_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& rel) const { return (dir_ / rel).string(); }

  void make_goals(const std::string& rel, int per_family = 2) {
    ASSERT_EQ(invoke({"gen-goals", "--per-family", std::to_string(per_family), "--out-dir", path(rel)}).code, 0);
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, GenGoalsIsDeterministic) {
  const auto flags = [&](const std::string& out) {
    return std::vector<std::string>{"gen-goals", "--families", "rectangle", "--per-family", "3", "--seed", "7",
                                    "--out-dir", path(out)};
  };
  ASSERT_EQ(invoke(flags("a")).code, 0);
  ASSERT_EQ(invoke(flags("b")).code, 0);
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(path("a"))) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path rel = fs::relative(e.path(), path("a"));
    EXPECT_EQ(slurp(e.path()), slurp(fs::path(path("b")) / rel)) << rel;
  }
  EXPECT_EQ(files, 4);  // three goals and the manifest
}

TEST_F(CliTest, GenGoalsDefaultLayout) {
  make_goals("g", 1);
  for (const char* family : {"rectangle", "l_shape", "polygon"}) EXPECT_TRUE(fs::is_directory(path("g/") + family));
  EXPECT_TRUE(fs::exists(path("g/manifest.csv")));
  EXPECT_EQ(load_goal_dir(path("g")).size(), 3u);
}

TEST_F(CliTest, GenGoalsUsageErrors) {
  EXPECT_EQ(invoke({"gen-goals", "--per-family", "0", "--out-dir", path("g")}).code, 1);
  EXPECT_EQ(invoke({"gen-goals", "--families", "circle", "--out-dir", path("g")}).code, 1);
  EXPECT_EQ(invoke({"gen-goals", "--depth-min-mm", "9", "--depth-max-mm", "5", "--out-dir", path("g")}).code, 1);
  EXPECT_EQ(invoke({}).code, 1);
  EXPECT_EQ(invoke({"dance"}).code, 1);
}

TEST_F(CliTest, RunIsByteReproducible) {
  make_goals("g");
  for (const char* policy : {"bcpp", "rand"}) {
    const auto flags = [&](const std::string& out) {
      return std::vector<std::string>{"run", "--policy", policy, "--goals", path("g"), "--episodes", "4",
                                      "--seed", "1", "--out", path(out), "--log", path(out + ".log")};
    };
    ASSERT_EQ(invoke(flags("a.csv")).code, 0);
    ASSERT_EQ(invoke(flags("b.csv")).code, 0);
    EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv"))) << policy;
    EXPECT_EQ(slurp(path("a.csv.log")), slurp(path("b.csv.log"))) << policy;
    EXPECT_TRUE(fs::exists(path("a.csv.meta")));
  }
}

TEST_F(CliTest, RunThreadsDoNotChangeOutput) {
  make_goals("g");
  const auto flags = [&](const std::string& out, const std::string& threads) {
    return std::vector<std::string>{"run", "--policy", "rand", "--goals", path("g"), "--episodes", "6",
                                    "--out", path(out), "--threads", threads};
  };
  ASSERT_EQ(invoke(flags("one.csv", "1")).code, 0);
  ASSERT_EQ(invoke(flags("four.csv", "4")).code, 0);
  EXPECT_EQ(slurp(path("one.csv")), slurp(path("four.csv")));
}

TEST_F(CliTest, RunErrors) {
  make_goals("g", 1);
  EXPECT_EQ(invoke({"run", "--policy", "ppo", "--goals", path("g"), "--out", path("r.csv")}).code, 1);
  EXPECT_EQ(invoke({"run", "--obs", "depth", "--goals", path("g"), "--out", path("r.csv")}).code, 1);
  EXPECT_EQ(invoke({"run", "--episodes", "0", "--goals", path("g"), "--out", path("r.csv")}).code, 1);
  const Output missing = invoke({"run", "--goals", path("nowhere"), "--out", path("r.csv")});
  EXPECT_EQ(missing.code, 2);
  EXPECT_FALSE(missing.err.empty());
}

TEST_F(CliTest, EvalSelfComparison) {
  make_goals("g", 1);
  ASSERT_EQ(invoke({"run", "--goals", path("g"), "--episodes", "3", "--out", path("r.csv")}).code, 0);
  const Output o = invoke({"eval", "--a", path("r.csv"), "--b", path("r.csv")});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("p=1 "), std::string::npos) << o.out;
  EXPECT_EQ(o.out.find('*'), std::string::npos);
}

TEST_F(CliTest, EvalSchemaErrors) {
  make_goals("g", 1);
  ASSERT_EQ(invoke({"run", "--goals", path("g"), "--episodes", "2", "--out", path("r.csv")}).code, 0);
  const Output o = invoke({"eval", "--a", path("r.csv"), "--b", path("r.csv"), "--metric", "speed"});
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("missing column"), std::string::npos) << o.err;
  EXPECT_EQ(invoke({"eval", "--a", path("r.csv")}).code, 1);
}

TEST_F(CliTest, RenderWritesPgm) {
  make_goals("g", 1);
  const std::string map = load_goal_dir(path("g")).front().id;
  std::string ghm;
  for (const auto& e : fs::recursive_directory_iterator(path("g")))
    if (e.path().extension() == ".ghm") ghm = e.path().string();
  const Output o = invoke({"render", "--map", ghm, "--out", path("m.pgm")});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(slurp(path("m.pgm")).substr(0, 2), "P5");
  EXPECT_EQ(invoke({"render", "--map", ghm, "--out", path("m.png"), "--format", "png"}).code, 1);
  EXPECT_EQ(invoke({"render", "--map", path("none.ghm"), "--out", path("x.pgm")}).code, 2);
  EXPECT_FALSE(map.empty());
}

TEST_F(CliTest, ConfigFileAndFlagPrecedence) {
  {
    std::ofstream cfg(path("gen.cfg"));
    cfg << "families = rectangle\nper-family = 2\nseed = 40\n";
  }
  ASSERT_EQ(invoke({"--config", path("gen.cfg"), "gen-goals", "--out-dir", path("a")}).code, 0);
  EXPECT_EQ(load_goal_dir(path("a")).size(), 2u);
  EXPECT_FALSE(fs::exists(path("a/polygon")));
  ASSERT_EQ(invoke({"--config", path("gen.cfg"), "gen-goals", "--per-family", "1", "--out-dir", path("b")}).code, 0);
  EXPECT_EQ(load_goal_dir(path("b")).size(), 1u);
  {
    std::ofstream cfg(path("bad.cfg"));
    cfg << "colour = blue\n";
  }
  EXPECT_EQ(invoke({"--config", path("bad.cfg"), "gen-goals", "--out-dir", path("c")}).code, 1);
}
