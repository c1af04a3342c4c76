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

// The toy instruction set: fixed 4-byte instructions, 16 registers of 16 bits.
//
//   byte0 = opcode, byte1 = rd, byte2 = rs / imm low, byte3 = imm high
//
// Formats:
//   R  rd, rs        byte3 must be zero
//   I  rd, imm16     imm in bytes 2-3
//   J  imm16         byte1 must be zero, imm in bytes 2-3
//   N  (none)        bytes 1-3 must be zero
//
// A decoder that rejects garbled bytes is the detection mechanism: code read
// under the wrong key decodes successfully only with probability
// valid_encoding_density().

#ifndef KEYFLOW_ISA_H_
#define KEYFLOW_ISA_H_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace keyflow::isa {

inline constexpr int kNumRegisters = 16;
inline constexpr int kInstructionSize = 4;

// Reserved registers.
inline constexpr uint8_t kSigReg = 13;  // signature, doubles as view selector
inline constexpr uint8_t kRcReg = 14;   // return constant loaded by call headers
inline constexpr uint8_t kSpReg = 15;   // stack pointer

enum class Opcode : uint8_t {
  kNop = 0x00,
  kMovi = 0x01,
  kMov = 0x02,
  kAdd = 0x03,
  kSub = 0x04,
  kXor = 0x05,
  kXori = 0x06,
  kLdr = 0x07,
  kStr = 0x08,
  kCall = 0x09,
  kCallr = 0x0A,
  kRet = 0x0B,
  kJmp = 0x0C,
  kBeqz = 0x0D,
  kKsw = 0x0E,
  kHlt = 0x0F,
  kOut = 0x10,
};

enum class Format : uint8_t {
  kR,
  kI,
  kJ,
  kN,
  kAny,  // every byte pattern accepted; only used for what-if density tables
};

struct Instruction {
  Opcode op = Opcode::kNop;
  uint8_t rd = 0;
  uint8_t rs = 0;
  uint16_t imm = 0;

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

using Encoding = std::array<uint8_t, kInstructionSize>;

enum class DecodeError : uint8_t { kInvalidOpcode, kInvalidField };

struct DecodeFault {
  DecodeError error;
  uint8_t byte_index = 0;  // offending byte within the 4-byte slot
  uint8_t value = 0;

  std::string Describe() const;
  friend bool operator==(const DecodeFault&, const DecodeFault&) = default;
};

// Either a decoded instruction or the reason decoding failed.
class DecodeResult {
 public:
  DecodeResult(Instruction i) : instruction_(i) {}  // NOLINT
  DecodeResult(DecodeFault f) : fault_(f) {}        // NOLINT

  bool ok() const { return instruction_.has_value(); }
  const Instruction& instruction() const { return *instruction_; }
  const DecodeFault& fault() const { return *fault_; }

 private:
  std::optional<Instruction> instruction_;
  std::optional<DecodeFault> fault_;
};

// Maps every opcode byte to its format, or to nothing when the byte is not a
// valid opcode.
class OpcodeTable {
 public:
  OpcodeTable() = default;

  // The 17-opcode table used by the machine.
  static const OpcodeTable& Default();

  void Set(uint8_t opcode, Format format) { formats_[opcode] = format; }
  void Clear(uint8_t opcode) { formats_[opcode].reset(); }
  std::optional<Format> FormatOf(uint8_t opcode) const {
    return formats_[opcode];
  }
  int size() const;

 private:
  std::array<std::optional<Format>, 256> formats_{};
};

// Exact count of 4-byte strings accepted for an opcode of the given format.
uint64_t ValidPatterns(Format format);

Format FormatOf(Opcode op);
std::string_view Mnemonic(Opcode op);
std::optional<Opcode> OpcodeFromMnemonic(std::string_view mnemonic);

Encoding Encode(const Instruction& instruction);
DecodeResult Decode(std::span<const uint8_t, kInstructionSize> bytes,
                    const OpcodeTable& table = OpcodeTable::Default());

// Exact probability that a uniformly random 4-byte string decodes.
// Returned as numerator over 2^32 and as a double.
struct Density {
  uint64_t valid_patterns = 0;
  double value() const {
    return static_cast<double>(valid_patterns) / 4294967296.0;
  }
};
Density ValidEncodingDensity(const OpcodeTable& table = OpcodeTable::Default());

std::string Disassemble(const Instruction& instruction);

}  // namespace keyflow::isa

#endif  // KEYFLOW_ISA_H_
