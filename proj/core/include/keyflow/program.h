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

#ifndef KEYFLOW_PROGRAM_H_
#define KEYFLOW_PROGRAM_H_

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "keyflow/isa.h"

namespace keyflow {

// Fixed guest-linear layout of a loaded program (16-bit address space).
namespace layout {
inline constexpr uint32_t kAddressSpace = 0x10000;
inline constexpr uint16_t kCodeBase = 0x0000;
inline constexpr uint16_t kDataBase = 0x8000;
inline constexpr uint32_t kCodeLimit = kDataBase;  // code must end below data
}  // namespace layout

// One source instruction. `symbol` names the label or function whose address
// becomes the immediate (plus `addend`); empty when the immediate is literal.
struct Statement {
  isa::Instruction instruction;
  std::string symbol;
  int32_t addend = 0;
  std::vector<std::string> labels;
  int line = 0;
};

struct Function {
  std::string name;
  bool entry = false;
  bool external = false;  // unprotected code in the default key domain
  std::vector<Statement> body;
  int line = 0;
};

struct LabelRef {
  size_t function = 0;
  size_t statement = 0;
};

struct CallEdge {
  std::string caller;
  std::string callee;
  bool indirect = false;
  friend bool operator==(const CallEdge&, const CallEdge&) = default;
};

struct Program {
  std::vector<Function> functions;
  // Call-site label (on a CALLR) -> possible callees.
  std::map<std::string, std::vector<std::string>> indirect_target_sets;
  std::map<std::string, LabelRef> labels;
  uint32_t data_size = 0;

  size_t entry_index() const;
  const Function* Find(std::string_view name) const;
  std::optional<size_t> IndexOf(std::string_view name) const;
  std::vector<CallEdge> CallGraph() const;
  size_t instruction_count() const;
};

class AssembleError : public std::runtime_error {
 public:
  AssembleError(int line, const std::string& reason);
  int line() const { return line_; }
  const std::string& reason() const { return reason_; }

 private:
  int line_;
  std::string reason_;
};

// Parses the textual assembly format:
//   .data SIZE
//   .func NAME [entry] [extern]
//   label: MNEMONIC operands    ; comment
//   .endfunc
//   .targets CALLSITE_LABEL f1,f2,...
// Immediates are numbers, labels, function names, or DATA, optionally with
// +N / -N. Throws AssembleError.
Program Assemble(std::string_view source);

// Straight concatenation of all functions starting at kCodeBase with symbols
// resolved; the uninstrumented reference image.
struct BaselineImage {
  std::vector<uint8_t> code;
  std::map<std::string, uint16_t> function_addresses;
  std::vector<uint16_t> statement_addresses;  // flattened, program order
};
BaselineImage LinkBaseline(const Program& program);

}  // namespace keyflow

#endif  // KEYFLOW_PROGRAM_H_
