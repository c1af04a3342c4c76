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

#ifndef KEYFLOW_LOADER_H_
#define KEYFLOW_LOADER_H_

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "keyflow/config.h"
#include "keyflow/container.h"
#include "keyflow/machine.h"

namespace keyflow {

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadReport {
  size_t domains = 0;
  std::map<KeyId, uint32_t> bytes_per_key;  // code bytes encrypted per key id
  uint32_t code_pages = 0;
  uint32_t data_pages = 0;
  uint32_t stack_pages = 0;
  std::string ToText() const;
};

// Maps pages, initialises and registers the views, writes every key domain
// through its own view (encrypting it under that view's key), zeroes data and
// stack under key 0 and activates the entry view. The protocol order is
// register, encrypt, activate, jump.
Machine Load(const InstrumentedBinary& binary, const SystemConfig& config, LoadReport* report = nullptr);
inline Machine Load(const BinaryContainer& c, const SystemConfig& config, LoadReport* report = nullptr) {
  return Load(c.binary, config, report);
}

// Throws LoadError when the domain map is not block-aligned, overlaps, leaves
// gaps, or names a signature outside {2} and the protected view range.
void ValidateDomains(const InstrumentedBinary& binary, size_t view_count);

}  // namespace keyflow

#endif  // KEYFLOW_LOADER_H_
