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

#ifndef KEYFLOW_SIGNATURES_H_
#define KEYFLOW_SIGNATURES_H_

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "keyflow/program.h"

namespace keyflow {

// A signature is the running control-flow state and, at the same time, the
// index of the memory view (and so the key) that decrypts the code executing
// under it.
using Signature = uint16_t;

// View indices 0-2 are reserved (hypervisor, kernel, default user).
inline constexpr Signature kDefaultUserSignature = 2;
inline constexpr Signature kFirstProtectedSignature = 3;

struct SignatureRange {
  Signature low = kFirstProtectedSignature;
  Signature high = 63;
  uint32_t size() const { return high >= low ? high - low + 1u : 0u; }
};

// Identifies one call instruction in the source program.
struct CallSiteId {
  size_t function = 0;
  size_t statement = 0;
  friend auto operator<=>(const CallSiteId&, const CallSiteId&) = default;
};

// Indirect call sites whose target sets overlap are merged into one class;
// every member function gets one indirect header carrying the class
// signature.
struct IndirectClass {
  std::vector<CallSiteId> sites;
  std::vector<std::string> members;
  Signature signature = 0;
};

struct SignatureMap {
  std::map<std::string, Signature> body;            // per protected function
  std::map<CallSiteId, Signature> direct_headers;   // per direct call site
  std::vector<IndirectClass> classes;
  std::map<CallSiteId, size_t> class_of_site;
  std::map<std::string, size_t> class_of_function;
  Signature entry = 0;

  // Number of signature draws made (domains that received a value).
  size_t domain_count = 0;
};

class InstrumentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// C such that applying S = S xor C to `current` yields `target`.
constexpr Signature ComputeCallConstant(Signature current, Signature target) {
  return static_cast<Signature>(current ^ target);
}

// Draws a signature for every protected function body, every direct call
// site into a protected function (when headers are on) and every indirect
// class. Values are pairwise distinct while the range has room, then drawn
// uniformly with repetition. Deterministic for (program, range, seed).
SignatureMap AssignSignatures(const Program& program, SignatureRange range, uint64_t seed,
                              bool headers = true);

// Union-find merge of overlapping .targets sets, in order of first
// appearance.
std::vector<IndirectClass> MergeTargetSets(const Program& program);

}  // namespace keyflow

#endif  // KEYFLOW_SIGNATURES_H_
