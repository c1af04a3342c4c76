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

#include "keyflow/config.h"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace keyflow {

using nlohmann::json;

void SystemConfig::Validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (range.low < kFirstProtectedSignature) fail("s_low must be >= 3 (views 0-2 are reserved)");
  if (range.high < range.low) fail("s_high must be >= s_low");
  if (view_count() > kMaxViews) fail("3 + num_prot_epts must not exceed 512");
  if (range.high >= view_count()) fail("s_high must be < 3 + num_prot_epts (number of views)");
  if (key_id_capacity < 2 || key_id_capacity > kMaxKeyIdCapacity) fail("key_id_capacity must be in [2, 32768]");
  if (block_size != 16 && block_size != 32 && block_size != 64) fail("block_size must be 16, 32 or 64");
  if (page_size < block_size || page_size > 4096 || (page_size & (page_size - 1))) {
    fail("page_size must be a power of two in [block_size, 4096]");
  }
  if (stack_size == 0 || stack_size % page_size || stack_size > 0x4000) {
    fail("stack_size must be a positive multiple of page_size no larger than 16384");
  }
  if (master_secret.empty()) fail("master_secret must not be empty");
}

MasterSecret SystemConfig::Master() const {
  if (master_secret.size() == 64 && master_secret.find_first_not_of("0123456789abcdefABCDEF") == std::string::npos) {
    return MasterSecret::FromHex(master_secret);
  }
  return MasterSecret::FromPassphrase(master_secret);
}

std::string SystemConfig::ToJson() const {
  json j = {
      {"s_low", range.low},
      {"s_high", range.high},
      {"num_prot_epts", num_prot_epts},
      {"key_id_capacity", key_id_capacity},
      {"block_size", block_size},
      {"page_size", page_size},
      {"itlb_entries", itlb_entries},
      {"dtlb_entries", dtlb_entries},
      {"stack_size", stack_size},
      {"mode", std::string(ExecModeName(mode))},
      {"integrity", integrity},
      {"encrypted_ept", encrypted_ept},
      {"seed", seed},
  };
  return j.dump(2);
}

SystemConfig SystemConfig::FromJson(const std::string& text, SystemConfig c) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const json& v = it.value();
      if (k == "s_low") c.range.low = v.get<Signature>();
      else if (k == "s_high") c.range.high = v.get<Signature>();
      else if (k == "num_prot_epts") c.num_prot_epts = v.get<uint32_t>();
      else if (k == "key_id_capacity") c.key_id_capacity = v.get<uint32_t>();
      else if (k == "block_size") c.block_size = v.get<uint32_t>();
      else if (k == "page_size") c.page_size = v.get<uint32_t>();
      else if (k == "itlb_entries") c.itlb_entries = v.get<uint32_t>();
      else if (k == "dtlb_entries") c.dtlb_entries = v.get<uint32_t>();
      else if (k == "stack_size") c.stack_size = v.get<uint32_t>();
      else if (k == "integrity") c.integrity = v.get<bool>();
      else if (k == "encrypted_ept") c.encrypted_ept = v.get<bool>();
      else if (k == "master_secret") c.master_secret = v.get<std::string>();
      else if (k == "seed") c.seed = v.get<uint64_t>();
      else if (k == "mode") {
        auto m = ParseExecMode(v.get<std::string>());
        if (!m) throw ConfigError("mode must be 'aliasing' or 'keyreg'");
        c.mode = *m;
      } else {
        throw ConfigError("unknown config key '" + k + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config value has the wrong type: ") + e.what());
  }
  return c;
}

SystemConfig SystemConfig::FromFile(const std::string& path, SystemConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return FromJson(ss.str(), base);
}

SystemConfig SystemConfig::FromJson(const std::string& text) { return FromJson(text, SystemConfig{}); }
SystemConfig SystemConfig::FromFile(const std::string& path) { return FromFile(path, SystemConfig{}); }

}  // namespace keyflow
