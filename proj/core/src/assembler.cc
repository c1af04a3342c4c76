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

#include <algorithm>
#include <cctype>
#include <charconv>
#include <optional>
#include <set>
#include <sstream>

#include "keyflow/program.h"

namespace keyflow {

namespace {

std::string_view Trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> Split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    size_t pos = s.find(sep, start);
    out.push_back(Trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> Words(std::string_view s) {
  std::vector<std::string_view> out;
  size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

bool IsIdentifier(std::string_view s) {
  if (s.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_' || s[0] == '.')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  });
}

std::optional<int64_t> ParseNumber(std::string_view s) {
  bool negative = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    negative = s[0] == '-';
    s.remove_prefix(1);
  }
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    s.remove_prefix(2);
  }
  if (s.empty()) return std::nullopt;
  int64_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value, base);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return negative ? -value : value;
}

std::optional<uint8_t> ParseRegister(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lower == "sig") return isa::kSigReg;
  if (lower == "rc") return isa::kRcReg;
  if (lower == "sp") return isa::kSpReg;
  if (lower.size() < 2 || lower[0] != 'r') return std::nullopt;
  auto n = ParseNumber(std::string_view(lower).substr(1));
  if (!n || *n < 0 || *n >= isa::kNumRegisters) return std::nullopt;
  return static_cast<uint8_t>(*n);
}

class Parser {
 public:
  Program Run(std::string_view source) {
    int line_no = 0;
    size_t pos = 0;
    while (pos <= source.size()) {
      size_t end = source.find('\n', pos);
      if (end == std::string_view::npos) end = source.size();
      ++line_no;
      ParseLine(source.substr(pos, end - pos), line_no);
      pos = end + 1;
    }
    if (current_) throw AssembleError(current_line_, "missing .endfunc for '" + program_.functions.back().name + "'");
    if (!pending_labels_.empty()) throw AssembleError(line_no, "label '" + pending_labels_.front() + "' does not precede an instruction");
    Validate();
    return std::move(program_);
  }

 private:
  void ParseLine(std::string_view raw, int line) {
    size_t cut = raw.find_first_of(";#");
    std::string_view text = Trim(raw.substr(0, cut));
    if (text.empty()) return;

    if (text[0] == '.') {
      ParseDirective(text, line);
      return;
    }
    // Leading labels.
    while (true) {
      size_t colon = text.find(':');
      if (colon == std::string_view::npos) break;
      std::string_view name = Trim(text.substr(0, colon));
      if (!IsIdentifier(name)) break;
      if (!current_) throw AssembleError(line, "label '" + std::string(name) + "' outside of a function");
      DefineLabel(std::string(name), line);
      text = Trim(text.substr(colon + 1));
    }
    if (text.empty()) return;
    if (!current_) throw AssembleError(line, "instruction outside of a function");
    ParseInstruction(text, line);
  }

  void ParseDirective(std::string_view text, int line) {
    auto words = Words(text);
    const std::string_view d = words[0];
    if (d == ".func") {
      if (current_) throw AssembleError(line, "nested .func");
      if (words.size() < 2 || !IsIdentifier(words[1])) throw AssembleError(line, ".func needs a name");
      Function f;
      f.name = std::string(words[1]);
      f.line = line;
      for (size_t k = 2; k < words.size(); ++k) {
        if (words[k] == "entry") {
          f.entry = true;
        } else if (words[k] == "extern") {
          f.external = true;
        } else {
          throw AssembleError(line, "unknown .func attribute '" + std::string(words[k]) + "'");
        }
      }
      if (program_.Find(f.name)) throw AssembleError(line, "duplicate function '" + f.name + "'");
      if (program_.labels.count(f.name)) throw AssembleError(line, "function '" + f.name + "' collides with a label");
      program_.functions.push_back(std::move(f));
      current_ = true;
      current_line_ = line;
    } else if (d == ".endfunc") {
      if (!current_) throw AssembleError(line, ".endfunc without .func");
      if (!pending_labels_.empty()) throw AssembleError(line, "label '" + pending_labels_.front() + "' does not precede an instruction");
      if (program_.functions.back().body.empty()) throw AssembleError(line, "empty function '" + program_.functions.back().name + "'");
      current_ = false;
    } else if (d == ".data") {
      if (words.size() != 2) throw AssembleError(line, ".data takes one size");
      auto n = ParseNumber(words[1]);
      if (!n || *n < 0 || *n > 0x4000) throw AssembleError(line, "bad .data size");
      program_.data_size = static_cast<uint32_t>(*n);
    } else if (d == ".targets") {
      std::string_view rest = Trim(text.substr(d.size()));
      size_t sp = rest.find_first_of(" \t");
      if (sp == std::string_view::npos) throw AssembleError(line, ".targets needs a call-site label and a function list");
      std::string site(Trim(rest.substr(0, sp)));
      if (!IsIdentifier(site)) throw AssembleError(line, "bad call-site label in .targets");
      std::vector<std::string> fns;
      for (auto name : Split(Trim(rest.substr(sp)), ',')) {
        if (!IsIdentifier(name)) throw AssembleError(line, "bad function name in .targets");
        fns.emplace_back(name);
      }
      if (program_.indirect_target_sets.count(site)) throw AssembleError(line, "duplicate .targets for '" + site + "'");
      targets_lines_[site] = line;
      program_.indirect_target_sets[site] = std::move(fns);
    } else {
      throw AssembleError(line, "unknown directive '" + std::string(d) + "'");
    }
  }

  void DefineLabel(const std::string& name, int line) {
    if (program_.labels.count(name) || std::count(pending_labels_.begin(), pending_labels_.end(), name)) {
      throw AssembleError(line, "duplicate label '" + name + "'");
    }
    if (program_.Find(name)) throw AssembleError(line, "label '" + name + "' collides with a function");
    if (name == "DATA") throw AssembleError(line, "DATA is reserved");
    pending_labels_.push_back(name);
  }

  void ParseImmediate(std::string_view s, Statement& st, int line) {
    if (auto n = ParseNumber(s)) {
      if (*n < -32768 || *n > 0xFFFF) throw AssembleError(line, "immediate out of range");
      st.instruction.imm = static_cast<uint16_t>(*n);
      return;
    }
    size_t op = s.find_first_of("+-", 1);
    std::string_view name = Trim(s.substr(0, op));
    if (!IsIdentifier(name)) throw AssembleError(line, "bad immediate '" + std::string(s) + "'");
    st.symbol = std::string(name);
    if (op != std::string_view::npos) {
      auto n = ParseNumber(Trim(s.substr(op + 1)));
      if (!n) throw AssembleError(line, "bad offset in '" + std::string(s) + "'");
      st.addend = static_cast<int32_t>(s[op] == '-' ? -*n : *n);
    }
  }

  void ParseInstruction(std::string_view text, int line) {
    size_t sp = text.find_first_of(" \t");
    std::string_view mnemonic = text.substr(0, sp);
    std::string_view rest = sp == std::string_view::npos ? std::string_view() : Trim(text.substr(sp));
    auto op = isa::OpcodeFromMnemonic(mnemonic);
    if (!op) throw AssembleError(line, "unknown mnemonic '" + std::string(mnemonic) + "'");

    std::vector<std::string_view> operands;
    if (!rest.empty()) operands = Split(rest, ',');

    Statement st;
    st.instruction.op = *op;
    st.line = line;
    auto expect = [&](size_t n) {
      if (operands.size() != n) {
        throw AssembleError(line, std::string(mnemonic) + " expects " + std::to_string(n) + " operand(s)");
      }
    };
    auto reg = [&](std::string_view s) {
      auto r = ParseRegister(s);
      if (!r) throw AssembleError(line, "bad register '" + std::string(s) + "'");
      return *r;
    };

    switch (*op) {
      case isa::Opcode::kNop:
      case isa::Opcode::kRet:
      case isa::Opcode::kKsw:
      case isa::Opcode::kHlt:
        expect(0);
        break;
      case isa::Opcode::kMovi:
      case isa::Opcode::kXori:
      case isa::Opcode::kBeqz:
        expect(2);
        st.instruction.rd = reg(operands[0]);
        ParseImmediate(operands[1], st, line);
        break;
      case isa::Opcode::kCall:
      case isa::Opcode::kJmp:
        expect(1);
        ParseImmediate(operands[0], st, line);
        break;
      case isa::Opcode::kCallr:
      case isa::Opcode::kOut:
        expect(1);
        st.instruction.rd = reg(operands[0]);
        break;
      default:
        expect(2);
        st.instruction.rd = reg(operands[0]);
        st.instruction.rs = reg(operands[1]);
        break;
    }

    Function& fn = program_.functions.back();
    for (auto& l : pending_labels_) {
      program_.labels[l] = LabelRef{program_.functions.size() - 1, fn.body.size()};
      st.labels.push_back(l);
    }
    pending_labels_.clear();
    fn.body.push_back(std::move(st));
  }

  void Validate() {
    if (program_.functions.empty()) throw AssembleError(0, "no functions");
    std::vector<size_t> entries;
    for (size_t i = 0; i < program_.functions.size(); ++i) {
      if (program_.functions[i].entry) entries.push_back(i);
    }
    if (entries.empty()) {
      if (auto main = program_.IndexOf("main")) {
        program_.functions[*main].entry = true;
      } else if (program_.functions.size() == 1) {
        program_.functions[0].entry = true;
      } else {
        throw AssembleError(0, "no entry function (mark one with 'entry' or name it main)");
      }
    } else if (entries.size() > 1) {
      throw AssembleError(program_.functions[entries[1]].line, "more than one entry function");
    }
    for (const auto& f : program_.functions) {
      if (f.entry && f.external) throw AssembleError(f.line, "entry function cannot be extern");
    }

    for (const auto& f : program_.functions) {
      for (const auto& st : f.body) {
        if (st.symbol.empty()) continue;
        const bool is_fn = program_.Find(st.symbol) != nullptr;
        const bool is_label = program_.labels.count(st.symbol) > 0;
        if (st.instruction.op == isa::Opcode::kCall) {
          if (!is_fn) {
            throw AssembleError(st.line, is_label ? "CALL target '" + st.symbol + "' is not a function"
                                                  : "undefined label '" + st.symbol + "'");
          }
          if (st.addend != 0) throw AssembleError(st.line, "CALL target cannot carry an offset");
        } else if (!is_fn && !is_label && st.symbol != "DATA") {
          throw AssembleError(st.line, "undefined label '" + st.symbol + "'");
        }
      }
    }
    for (const auto& [site, fns] : program_.indirect_target_sets) {
      const int line = targets_lines_[site];
      auto it = program_.labels.find(site);
      if (it == program_.labels.end()) throw AssembleError(line, "undefined label '" + site + "'");
      const auto& st = program_.functions[it->second.function].body[it->second.statement];
      if (st.instruction.op != isa::Opcode::kCallr) {
        throw AssembleError(line, "call site '" + site + "' is not a CALLR");
      }
      if (fns.empty()) throw AssembleError(line, "empty target set for '" + site + "'");
      for (const auto& fn : fns) {
        if (!program_.Find(fn)) throw AssembleError(line, "undefined function '" + fn + "' in target set");
      }
    }
  }

  Program program_;
  bool current_ = false;
  int current_line_ = 0;
  std::vector<std::string> pending_labels_;
  std::map<std::string, int> targets_lines_;
};

}  // namespace

AssembleError::AssembleError(int line, const std::string& reason)
    : std::runtime_error("line " + std::to_string(line) + ": " + reason),
      line_(line),
      reason_(reason) {}

Program Assemble(std::string_view source) { return Parser().Run(source); }

size_t Program::entry_index() const {
  for (size_t i = 0; i < functions.size(); ++i) {
    if (functions[i].entry) return i;
  }
  return 0;
}

const Function* Program::Find(std::string_view name) const {
  for (const auto& f : functions) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

std::optional<size_t> Program::IndexOf(std::string_view name) const {
  for (size_t i = 0; i < functions.size(); ++i) {
    if (functions[i].name == name) return i;
  }
  return std::nullopt;
}

std::vector<CallEdge> Program::CallGraph() const {
  std::vector<CallEdge> edges;
  auto add = [&](CallEdge e) {
    if (std::find(edges.begin(), edges.end(), e) == edges.end()) edges.push_back(std::move(e));
  };
  for (const auto& f : functions) {
    for (const auto& st : f.body) {
      if (st.instruction.op == isa::Opcode::kCall) add({f.name, st.symbol, false});
      if (st.instruction.op == isa::Opcode::kCallr) {
        for (const auto& l : st.labels) {
          auto it = indirect_target_sets.find(l);
          if (it == indirect_target_sets.end()) continue;
          for (const auto& callee : it->second) add({f.name, callee, true});
        }
      }
    }
  }
  return edges;
}

size_t Program::instruction_count() const {
  size_t n = 0;
  for (const auto& f : functions) n += f.body.size();
  return n;
}

BaselineImage LinkBaseline(const Program& program) {
  BaselineImage image;
  std::map<std::string, uint16_t> label_addr;
  uint32_t addr = layout::kCodeBase;
  for (const auto& f : program.functions) {
    image.function_addresses[f.name] = static_cast<uint16_t>(addr);
    for (const auto& st : f.body) {
      for (const auto& l : st.labels) label_addr[l] = static_cast<uint16_t>(addr);
      image.statement_addresses.push_back(static_cast<uint16_t>(addr));
      addr += isa::kInstructionSize;
    }
  }
  if (addr > layout::kCodeLimit) throw AssembleError(0, "code does not fit below the data region");

  image.code.reserve(addr - layout::kCodeBase);
  for (const auto& f : program.functions) {
    for (const auto& st : f.body) {
      isa::Instruction ins = st.instruction;
      if (!st.symbol.empty()) {
        int32_t base = 0;
        if (auto it = image.function_addresses.find(st.symbol); it != image.function_addresses.end()) {
          base = it->second;
        } else if (auto jt = label_addr.find(st.symbol); jt != label_addr.end()) {
          base = jt->second;
        } else {
          base = layout::kDataBase;
        }
        ins.imm = static_cast<uint16_t>(base + st.addend);
      }
      auto bytes = isa::Encode(ins);
      image.code.insert(image.code.end(), bytes.begin(), bytes.end());
    }
  }
  return image;
}

}  // namespace keyflow
