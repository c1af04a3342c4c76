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

#include "keyflow/isa.h"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <string>

namespace keyflow::isa {

namespace {

struct OpInfo {
  Opcode op;
  std::string_view mnemonic;
  Format format;
};

constexpr std::array<OpInfo, 17> kOps = {{
    {Opcode::kNop, "NOP", Format::kN},
    {Opcode::kMovi, "MOVI", Format::kI},
    {Opcode::kMov, "MOV", Format::kR},
    {Opcode::kAdd, "ADD", Format::kR},
    {Opcode::kSub, "SUB", Format::kR},
    {Opcode::kXor, "XOR", Format::kR},
    {Opcode::kXori, "XORI", Format::kI},
    {Opcode::kLdr, "LDR", Format::kR},
    {Opcode::kStr, "STR", Format::kR},
    {Opcode::kCall, "CALL", Format::kJ},
    {Opcode::kCallr, "CALLR", Format::kR},
    {Opcode::kRet, "RET", Format::kN},
    {Opcode::kJmp, "JMP", Format::kJ},
    {Opcode::kBeqz, "BEQZ", Format::kI},
    {Opcode::kKsw, "KSW", Format::kN},
    {Opcode::kHlt, "HLT", Format::kN},
    {Opcode::kOut, "OUT", Format::kR},
}};

const OpInfo* Find(Opcode op) {
  for (const auto& info : kOps) {
    if (info.op == op) return &info;
  }
  return nullptr;
}

}  // namespace

std::string DecodeFault::Describe() const {
  std::ostringstream os;
  if (error == DecodeError::kInvalidOpcode) {
    os << "invalid-opcode 0x" << std::hex << static_cast<int>(value);
  } else {
    os << "invalid-field byte" << static_cast<int>(byte_index) << "=0x"
       << std::hex << static_cast<int>(value);
  }
  return os.str();
}

const OpcodeTable& OpcodeTable::Default() {
  static const OpcodeTable table = [] {
    OpcodeTable t;
    for (const auto& info : kOps) t.Set(static_cast<uint8_t>(info.op), info.format);
    return t;
  }();
  return table;
}

int OpcodeTable::size() const {
  return static_cast<int>(std::count_if(formats_.begin(), formats_.end(),
                                        [](const auto& f) { return f.has_value(); }));
}

uint64_t ValidPatterns(Format format) {
  // Patterns over bytes 1-3 for a fixed opcode byte.
  switch (format) {
    case Format::kR:
      return 16 * 16;  // rd < 16, rs < 16, byte3 == 0
    case Format::kI:
      return 16 * 65536;  // rd < 16, any imm16
    case Format::kJ:
      return 65536;  // byte1 == 0, any imm16
    case Format::kN:
      return 1;
    case Format::kAny:
      return uint64_t{1} << 24;
  }
  return 0;
}

Format FormatOf(Opcode op) {
  const OpInfo* info = Find(op);
  return info ? info->format : Format::kAny;
}

std::string_view Mnemonic(Opcode op) {
  const OpInfo* info = Find(op);
  return info ? info->mnemonic : std::string_view("???");
}

std::optional<Opcode> OpcodeFromMnemonic(std::string_view mnemonic) {
  std::string upper(mnemonic);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  for (const auto& info : kOps) {
    if (info.mnemonic == upper) return info.op;
  }
  return std::nullopt;
}

Encoding Encode(const Instruction& i) {
  const uint8_t op = static_cast<uint8_t>(i.op);
  switch (FormatOf(i.op)) {
    case Format::kR:
      return {op, i.rd, i.rs, 0};
    case Format::kI:
      return {op, i.rd, static_cast<uint8_t>(i.imm & 0xFF),
              static_cast<uint8_t>(i.imm >> 8)};
    case Format::kJ:
      return {op, 0, static_cast<uint8_t>(i.imm & 0xFF),
              static_cast<uint8_t>(i.imm >> 8)};
    case Format::kN:
      return {op, 0, 0, 0};
    case Format::kAny:
      return {op, i.rd, static_cast<uint8_t>(i.imm & 0xFF),
              static_cast<uint8_t>(i.imm >> 8)};
  }
  return {op, 0, 0, 0};
}

DecodeResult Decode(std::span<const uint8_t, kInstructionSize> b,
                    const OpcodeTable& table) {
  const auto format = table.FormatOf(b[0]);
  if (!format) return DecodeFault{DecodeError::kInvalidOpcode, 0, b[0]};

  auto bad = [&](uint8_t index) {
    return DecodeFault{DecodeError::kInvalidField, index, b[index]};
  };
  Instruction i;
  i.op = static_cast<Opcode>(b[0]);
  const uint16_t imm = static_cast<uint16_t>(b[2] | (b[3] << 8));
  switch (*format) {
    case Format::kR:
      if (b[1] >= kNumRegisters) return bad(1);
      if (b[2] >= kNumRegisters) return bad(2);
      if (b[3] != 0) return bad(3);
      i.rd = b[1];
      i.rs = b[2];
      break;
    case Format::kI:
      if (b[1] >= kNumRegisters) return bad(1);
      i.rd = b[1];
      i.imm = imm;
      break;
    case Format::kJ:
      if (b[1] != 0) return bad(1);
      i.imm = imm;
      break;
    case Format::kN:
      for (uint8_t k = 1; k < kInstructionSize; ++k) {
        if (b[k] != 0) return bad(k);
      }
      break;
    case Format::kAny:
      i.rd = b[1];
      i.imm = imm;
      break;
  }
  return i;
}

Density ValidEncodingDensity(const OpcodeTable& table) {
  Density d;
  for (int op = 0; op < 256; ++op) {
    if (auto f = table.FormatOf(static_cast<uint8_t>(op))) {
      d.valid_patterns += ValidPatterns(*f);
    }
  }
  return d;
}

std::string Disassemble(const Instruction& i) {
  std::ostringstream os;
  os << Mnemonic(i.op);
  switch (FormatOf(i.op)) {
    case Format::kR:
      if (i.op == Opcode::kCallr || i.op == Opcode::kOut) {
        os << " r" << int{i.rd};
      } else {
        os << " r" << int{i.rd} << ", r" << int{i.rs};
      }
      break;
    case Format::kI:
      os << " r" << int{i.rd} << ", 0x" << std::hex << i.imm;
      break;
    case Format::kJ:
      os << " 0x" << std::hex << i.imm;
      break;
    default:
      break;
  }
  return os.str();
}

}  // namespace keyflow::isa
