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

#ifndef KEYFLOW_CONFIG_H_
#define KEYFLOW_CONFIG_H_

#include <cstdint>
#include <stdexcept>
#include <string>

#include "keyflow/crypto.h"
#include "keyflow/memview.h"
#include "keyflow/signatures.h"

namespace keyflow {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SystemConfig {
  SignatureRange range{3, 63};
  uint32_t num_prot_epts = 61;
  uint32_t key_id_capacity = 64;
  uint32_t block_size = 16;
  uint32_t page_size = 256;
  uint32_t itlb_entries = 16;
  uint32_t dtlb_entries = 16;
  uint32_t stack_size = 1024;
  ExecMode mode = ExecMode::kAliasing;
  bool integrity = false;
  bool encrypted_ept = false;
  std::string master_secret = "keyflow-default-master";  // passphrase or 64 hex digits
  uint64_t seed = 1;

  // Cross-field checks; throws ConfigError naming the offending field.
  void Validate() const;

  size_t view_count() const { return kReservedViews + num_prot_epts; }
  MasterSecret Master() const;

  // JSON round trip; unknown keys are rejected.
  std::string ToJson() const;
  // Keys present in the document override `base`.
  static SystemConfig FromJson(const std::string& text, SystemConfig base);
  static SystemConfig FromJson(const std::string& text);
  static SystemConfig FromFile(const std::string& path, SystemConfig base);
  static SystemConfig FromFile(const std::string& path);
};

}  // namespace keyflow

#endif  // KEYFLOW_CONFIG_H_
