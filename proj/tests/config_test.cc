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

#include <filesystem>

#include "keyflow/config.h"
#include "keyflow/container.h"
#include "keyflow/loader.h"
#include "testing.h"

namespace keyflow {
namespace {

TEST(Config, DefaultsValidate) {
  const SystemConfig c;
  EXPECT_NO_THROW(c.Validate());
  EXPECT_EQ(c.view_count(), 64u);
}

TEST(Config, CrossFieldRules) {
  auto rejects = [](auto mutate) {
    SystemConfig c;
    mutate(c);
    EXPECT_THROW(c.Validate(), ConfigError);
  };
  rejects([](SystemConfig& c) { c.range.low = 1; });
  rejects([](SystemConfig& c) { c.range = {10, 9}; });
  rejects([](SystemConfig& c) { c.num_prot_epts = 510; });
  rejects([](SystemConfig& c) { c.range.high = 64; });
  rejects([](SystemConfig& c) { c.block_size = 48; });
  rejects([](SystemConfig& c) { c.page_size = 300; });
  rejects([](SystemConfig& c) { c.page_size = 8192; });
  rejects([](SystemConfig& c) { c.block_size = 64, c.page_size = 32; });
  rejects([](SystemConfig& c) { c.stack_size = 1000; });
  rejects([](SystemConfig& c) { c.key_id_capacity = 40000; });
}

TEST(Config, JsonRoundTripAndOverlay) {
  SystemConfig c;
  c.mode = ExecMode::kKeyReg;
  c.seed = 99;
  c.range = {5, 20};
  const SystemConfig back = SystemConfig::FromJson(c.ToJson());
  EXPECT_EQ(back.mode, ExecMode::kKeyReg);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.range.low, 5);
  EXPECT_EQ(back.range.high, 20);

  SystemConfig base;
  base.seed = 7;
  const SystemConfig over = SystemConfig::FromJson(R"({"page_size": 512})", base);
  EXPECT_EQ(over.seed, 7u);
  EXPECT_EQ(over.page_size, 512u);

  EXPECT_THROW(SystemConfig::FromJson(R"({"pagesize": 512})"), ConfigError);
  EXPECT_THROW(SystemConfig::FromJson(R"({"mode": "fast"})"), ConfigError);
  EXPECT_THROW(SystemConfig::FromJson(R"({"seed": "x"})"), ConfigError);
  EXPECT_THROW(SystemConfig::FromJson("[1"), ConfigError);
  EXPECT_THROW(SystemConfig::FromFile("/nonexistent/keyflow.json"), ConfigError);
}

TEST(Config, HexMasterSecret) {
  SystemConfig a, b;
  a.master_secret = std::string(64, 'a');
  b.master_secret = "passphrase";
  EXPECT_EQ(a.Master().bytes, MasterSecret::FromHex(std::string(64, 'a')).bytes);
  EXPECT_EQ(b.Master().bytes, MasterSecret::FromPassphrase("passphrase").bytes);
}

TEST(Container, RoundTripPreservesBehaviour) {
  for (const auto& name : {"indirect3", "multi_caller", "extern"}) {
    BinaryContainer c;
    c.binary = testing::BuildCorpus(name);
    c.source = testing::ReadText(testing::CorpusPath(name));
    c.seed = 1;
    const std::string text = ContainerToJson(c);
    const BinaryContainer back = ContainerFromJson(text);
    EXPECT_EQ(back.binary.code, c.binary.code);
    EXPECT_EQ(back.binary.key_domains, c.binary.key_domains);
    EXPECT_EQ(back.binary.slot_kinds, c.binary.slot_kinds);
    EXPECT_EQ(back.binary.call_sites.size(), c.binary.call_sites.size());
    EXPECT_EQ(back.binary.header_table.size(), c.binary.header_table.size());
    EXPECT_EQ(back.binary.stats.ksw, c.binary.stats.ksw);
    EXPECT_EQ(back.source, c.source);
    EXPECT_EQ(ContainerToJson(back), text);
    EXPECT_EQ(Load(back, SystemConfig{}).Run(100000).output, Load(c, SystemConfig{}).Run(100000).output);
  }
}

TEST(Container, FileRoundTripAndErrors) {
  const auto path = std::filesystem::temp_directory_path() / "keyflow_container_test.json";
  BinaryContainer c;
  c.binary = testing::BuildCorpus("loop");
  SaveContainer(c, path.string());
  EXPECT_EQ(LoadContainerFile(path.string()).binary.code, c.binary.code);
  std::filesystem::remove(path);
  EXPECT_THROW(LoadContainerFile(path.string()), ContainerError);
  EXPECT_THROW(ContainerFromJson("{}"), ContainerError);
  EXPECT_THROW(ContainerFromJson(R"({"format": "other"})"), ContainerError);
  EXPECT_THROW(ContainerFromJson("not json"), ContainerError);
}

}  // namespace
}  // namespace keyflow
