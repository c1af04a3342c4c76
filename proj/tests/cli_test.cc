// Copyright 2026 The Keyflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <unistd.h>

#include "cli.h"
#include "testing.h"

namespace keyflow::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result Cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = Main(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("keyflow_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string Path(const std::string& name) const { return (dir_ / name).string(); }
  std::string Write(const std::string& name, const std::string& text) const {
    std::ofstream(Path(name)) << text;
    return Path(name);
  }
  std::string Build(const std::string& corpus, std::vector<std::string> extra = {}) {
    const std::string out = Path(corpus + ".json");
    std::vector<std::string> args = {"build", testing::CorpusPath(corpus), "-o", out};
    args.insert(args.end(), extra.begin(), extra.end());
    const Result r = Cli(args);
    EXPECT_EQ(r.code, kOk) << r.err;
    return out;
  }

  fs::path dir_;
};

uint64_t Field(const std::string& text, const std::string& key) {
  std::smatch m;
  const std::regex re("\\b" + key + " = (\\d+)");
  if (!std::regex_search(text, m, re)) return UINT64_MAX;
  return std::stoull(m[1]);
}

TEST_F(CliTest, BuildReportsFormulaCounts) {
  const std::string out = Path("nested.json");
  const Result r = Cli({"build", testing::CorpusPath("nested"), "-o", out});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_TRUE(fs::exists(out));
  EXPECT_EQ(Field(r.out, "ksw"), 2 * Field(r.out, "call_sites") + Field(r.out, "headers") + Field(r.out, "footers"));
}

TEST_F(CliTest, BaselineBuildHasOneDomain) {
  const Result r = Cli({"build", testing::CorpusPath("nested"), "-o", Path("b.json"), "--no-instrument"});
  ASSERT_EQ(r.code, kOk);
  EXPECT_EQ(Field(r.out, "key_domains"), 1u);
  EXPECT_EQ(Field(r.out, "ksw"), 0u);
}

TEST_F(CliTest, ReservedViewsRejected) {
  const Result r = Cli({"build", testing::CorpusPath("loop"), "-o", Path("x.json"), "--s-low", "1"});
  EXPECT_EQ(r.code, kUsage);
  EXPECT_NE(r.err.find("s_low"), std::string::npos);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(Cli({}).code, kUsage);
  EXPECT_EQ(Cli({"frobnicate"}).code, kUsage);
  EXPECT_EQ(Cli({"run"}).code, kUsage);
  EXPECT_EQ(Cli({"run", Path("missing.json")}).code, kUsage);
  EXPECT_EQ(Cli({"build", Write("bad.s", ".func main\n JMP nowhere\n.endfunc\n"), "-o", Path("y.json")}).code, kUsage);
  EXPECT_EQ(Cli({"campaign", Build("loop"), "--model", "laser"}).code, kUsage);
  EXPECT_EQ(Cli({"--help"}).code, kOk);
}

TEST_F(CliTest, RunPrintsOutputAndCounters) {
  const std::string c = Build("multi_caller");
  const Result a = Cli({"run", c});
  ASSERT_EQ(a.code, kOk) << a.err;
  EXPECT_NE(a.out.find("output: 110 14\n"), std::string::npos);
  EXPECT_NE(a.out.find("counter model - not wall-clock"), std::string::npos);
  const Result k = Cli({"run", c, "--mode", "keyreg"});
  ASSERT_EQ(k.code, kOk);
  EXPECT_NE(k.out.find("output: 110 14\n"), std::string::npos);
  EXPECT_LT(Field(k.out, "tlb_misses"), Field(a.out, "tlb_misses"));
  EXPECT_EQ(Field(k.out, "view_switches"), 0u);
}

TEST_F(CliTest, TrapAndTimeoutExitTwo) {
  const std::string trap = Path("trap.json");
  ASSERT_EQ(Cli({"build", Write("t.s", ".func main\n RET\n.endfunc\n"), "-o", trap}).code, kOk);
  const Result r = Cli({"run", trap});
  EXPECT_EQ(r.code, kTrap);
  EXPECT_NE(r.err.find("StackFault"), std::string::npos);

  const std::string spin = Path("spin.json");
  ASSERT_EQ(Cli({"build", Write("s.s", ".func main\nl: JMP l\n.endfunc\n"), "-o", spin}).code, kOk);
  EXPECT_EQ(Cli({"run", spin, "--max-steps", "50"}).code, kTrap);
}

TEST_F(CliTest, CampaignIsReproducible) {
  const std::string c = Build("nested");
  const Result a = Cli({"campaign", c, "--model", "pc", "--n", "200", "--seed", "7", "--csv", Path("a.csv")});
  const Result b = Cli({"campaign", c, "--model", "pc", "--n", "200", "--seed", "7", "--csv", Path("b.csv"),
                        "--jobs", "3"});
  ASSERT_EQ(a.code, kOk) << a.err;
  ASSERT_EQ(b.code, kOk) << b.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(testing::ReadText(Path("a.csv")), testing::ReadText(Path("b.csv")));
}

TEST_F(CliTest, CompareUninstrumentedPrintsDelta) {
  const std::string c = Build("direct_calls");
  const Result r = Cli({"campaign", c, "--model", "calltarget", "--n", "300", "--compare-uninstrumented"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_NE(r.out.find("[uninstrumented]"), std::string::npos);
  std::smatch m;
  ASSERT_TRUE(std::regex_search(r.out, m, std::regex("defense_delta = (-?[0-9.]+)")));
  EXPECT_GT(std::stod(m[1]), 0.0);
}

TEST_F(CliTest, ConfigFileAndEnvironment) {
  const std::string bad = Write("bad.json", R"({"s_low": 2})");
  const std::string c = Build("loop");
  EXPECT_EQ(Cli({"run", c, "--config", bad}).code, kUsage);
  // Flags override the file.
  EXPECT_EQ(Cli({"run", c, "--config", bad, "--s-low", "3"}).code, kOk);

  ::setenv("KEYFLOW_CONFIG", bad.c_str(), 1);
  const int from_env = Cli({"run", c}).code;
  const std::string good = Write("good.json", R"({"mode": "keyreg"})");
  const Result overridden = Cli({"run", c, "--config", good});
  ::unsetenv("KEYFLOW_CONFIG");
  EXPECT_EQ(from_env, kUsage);
  EXPECT_EQ(overridden.code, kUsage);  // the file overlays the environment; s_low 2 still applies
  const Result plain = Cli({"run", c, "--config", good});
  EXPECT_EQ(plain.code, kOk);
  EXPECT_NE(plain.out.find("mode = keyreg"), std::string::npos);
}

TEST_F(CliTest, Density) {
  const Result r = Cli({"density", "--monte-carlo", "1000"});
  ASSERT_EQ(r.code, kOk);
  EXPECT_NE(r.out.find("valid_patterns = 3278852"), std::string::npos);
}

}  // namespace
}  // namespace keyflow::cli
