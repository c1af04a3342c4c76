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

// JSON binary container: plaintext code plus the key-domain metadata the
// loader needs, and enough build context to rebuild the baseline.

#ifndef KEYFLOW_CONTAINER_H_
#define KEYFLOW_CONTAINER_H_

#include <cstdint>
#include <stdexcept>
#include <string>

#include "keyflow/instrument.h"

namespace keyflow {

inline constexpr const char* kContainerFormat = "keyflow-container-1";

class ContainerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BinaryContainer {
  InstrumentedBinary binary;
  uint32_t page_size = 256;
  std::string source;  // assembly the binary was built from
  uint64_t seed = 1;
  SignatureRange range;
};

std::string ContainerToJson(const BinaryContainer& c);
BinaryContainer ContainerFromJson(const std::string& text);
void SaveContainer(const BinaryContainer& c, const std::string& path);
BinaryContainer LoadContainerFile(const std::string& path);

}  // namespace keyflow

#endif  // KEYFLOW_CONTAINER_H_
