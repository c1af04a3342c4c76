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

#include "keyflow/instrument.h"

#include <algorithm>
#include <deque>
#include <sstream>

namespace keyflow {

namespace {

using isa::Instruction;
using isa::Opcode;

std::string Hex(uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

CodeItem Item(Opcode op, SlotKind kind, uint8_t rd = 0, uint8_t rs = 0, uint16_t imm = 0) {
  CodeItem item;
  item.instruction = Instruction{op, rd, rs, imm};
  item.kind = kind;
  return item;
}

bool WritesRegister(const Instruction& i, uint8_t reg) {
  switch (i.op) {
    case Opcode::kMovi:
    case Opcode::kXori:
    case Opcode::kMov:
    case Opcode::kAdd:
    case Opcode::kSub:
    case Opcode::kXor:
    case Opcode::kLdr:
      return i.rd == reg;
    default:
      return false;
  }
}

bool UsesRegister(const Instruction& i, uint8_t reg) {
  switch (isa::FormatOf(i.op)) {
    case isa::Format::kR:
      return i.rd == reg || (i.op != Opcode::kCallr && i.op != Opcode::kOut && i.rs == reg);
    case isa::Format::kI:
      return i.rd == reg;
    default:
      return false;
  }
}

// Resolves a source statement's immediate reference.
CodeRef RefFor(const Program& program, const Statement& st) {
  CodeRef ref;
  if (st.symbol.empty()) return ref;
  ref.addend = st.addend;
  ref.name = st.symbol;
  if (st.symbol == "DATA" && !program.labels.count("DATA")) {
    ref.kind = CodeRef::Kind::kData;
  } else if (program.Find(st.symbol)) {
    ref.kind = CodeRef::Kind::kFunctionValue;
  } else {
    ref.kind = CodeRef::Kind::kLabel;
  }
  return ref;
}

CodeItem OriginalItem(const Program& program, const Statement& st) {
  CodeItem item;
  item.instruction = st.instruction;
  item.kind = SlotKind::kOriginal;
  item.ref = RefFor(program, st);
  return item;
}

struct SiteRecord {
  size_t segment = 0;
  size_t item = 0;  // index of the CALL/CALLR item
  CallKind kind = CallKind::kDirect;
  std::string caller;
  std::string callee;
  Signature caller_signature = 0;
  Signature target_signature = 0;
};

uint32_t RoundUp(uint32_t v, uint32_t m) { return (v + m - 1) / m * m; }

}  // namespace

std::optional<Signature> InstrumentedBinary::DomainAt(uint32_t gla) const {
  for (const auto& d : key_domains) {
    if (gla >= d.start && gla < d.start + d.length) return d.signature;
  }
  return std::nullopt;
}

SlotKind InstrumentedBinary::KindAt(uint32_t gla) const {
  const uint32_t slot = (gla - code_base) / isa::kInstructionSize;
  if (gla < code_base || slot >= slot_kinds.size()) return SlotKind::kPadding;
  return static_cast<SlotKind>(slot_kinds[slot]);
}

const FunctionInfo* InstrumentedBinary::FunctionAt(uint32_t gla) const {
  for (const auto& f : functions) {
    if (gla >= f.start && gla < f.start + f.size) return &f;
  }
  return nullptr;
}

std::vector<CodeItem> InstrumentCallSite(const CodeItem& call, Signature caller, Signature target,
                                         bool spill_rc) {
  std::vector<CodeItem> out;
  if (spill_rc) {
    out.push_back(Item(Opcode::kStr, SlotKind::kPrologue, isa::kRcReg, isa::kSpReg));
    out.push_back(Item(Opcode::kMovi, SlotKind::kPrologue, isa::kRcReg, 0, 2));
    out.push_back(Item(Opcode::kSub, SlotKind::kPrologue, isa::kSpReg, isa::kRcReg));
  }
  out.push_back(Item(Opcode::kXori, SlotKind::kPrologue, isa::kSigReg, 0,
                     ComputeCallConstant(caller, target)));
  out.push_back(Item(Opcode::kKsw, SlotKind::kPrologue));
  out.push_back(call);
  out.push_back(Item(Opcode::kXori, SlotKind::kEpilogue, isa::kSigReg, 0,
                     ComputeCallConstant(target, caller)));
  out.push_back(Item(Opcode::kKsw, SlotKind::kEpilogue));
  if (spill_rc) {
    out.push_back(Item(Opcode::kMovi, SlotKind::kEpilogue, isa::kRcReg, 0, 2));
    out.push_back(Item(Opcode::kAdd, SlotKind::kEpilogue, isa::kSpReg, isa::kRcReg));
    out.push_back(Item(Opcode::kLdr, SlotKind::kEpilogue, isa::kRcReg, isa::kSpReg));
  }
  return out;
}

std::vector<CodeItem> SynthesizeFooter() {
  return {Item(Opcode::kXor, SlotKind::kFooter, isa::kSigReg, isa::kRcReg),
          Item(Opcode::kKsw, SlotKind::kFooter)};
}

std::vector<CodeItem> SynthesizeHeader(const std::string& function, Signature header, Signature body) {
  std::vector<CodeItem> out;
  out.push_back(Item(Opcode::kXori, SlotKind::kHeader, isa::kSigReg, 0, ComputeCallConstant(header, body)));
  out.push_back(Item(Opcode::kMovi, SlotKind::kHeader, isa::kRcReg, 0, ComputeCallConstant(body, header)));
  out.push_back(Item(Opcode::kKsw, SlotKind::kHeader));
  CodeItem call = Item(Opcode::kCall, SlotKind::kHeader);
  call.ref.kind = CodeRef::Kind::kBody;
  call.ref.name = function;
  out.push_back(call);
  for (auto& item : SynthesizeFooter()) out.push_back(item);
  out.push_back(Item(Opcode::kRet, SlotKind::kHeader));
  return out;
}

std::vector<Signature> AnalyzeKeyFlow(const std::vector<uint8_t>& code, uint16_t code_base,
                                      uint32_t block_size, const std::vector<KeyFlowSeed>& seeds) {
  struct State {
    std::optional<Signature> sig;
    Signature view = 0;
    std::optional<uint16_t> rc;
  };
  const size_t slots = code.size() / isa::kInstructionSize;
  const uint32_t code_end = code_base + static_cast<uint32_t>(code.size());
  std::vector<std::optional<State>> at(slots);
  std::vector<size_t> seed_of(slots, SIZE_MAX);
  for (size_t k = 0; k < seeds.size(); ++k) {
    for (uint32_t a = seeds[k].gla; a < seeds[k].end; a += isa::kInstructionSize) {
      seed_of[(a - code_base) / isa::kInstructionSize] = k;
    }
  }

  std::deque<size_t> work;
  auto merge = [&](uint32_t gla, State st, uint32_t from) {
    if (gla < code_base || gla >= code_end || (gla - code_base) % isa::kInstructionSize) {
      throw InstrumentError("control transfer from " + Hex(from) + " leaves the code region");
    }
    const size_t s = (gla - code_base) / isa::kInstructionSize;
    auto& cur = at[s];
    if (!cur) {
      cur = st;
      work.push_back(s);
      return;
    }
    if (cur->view != st.view || cur->sig != st.sig) {
      throw InstrumentError("inconsistent key flow at " + Hex(gla) + ": reached with view " +
                            std::to_string(cur->view) + " and view " + std::to_string(st.view));
    }
    if (cur->rc && cur->rc != st.rc) {
      cur->rc.reset();
      work.push_back(s);
    }
  };
  for (const auto& seed : seeds) merge(seed.gla, State{seed.signature, seed.signature, std::nullopt}, seed.gla);

  struct CallCheck {
    uint32_t from;
    uint16_t target;
    Signature view;
  };
  std::vector<CallCheck> calls;

  while (!work.empty()) {
    const size_t s = work.front();
    work.pop_front();
    State st = *at[s];
    const uint32_t gla = code_base + static_cast<uint32_t>(s * isa::kInstructionSize);
    std::span<const uint8_t, 4> bytes(code.data() + s * isa::kInstructionSize, 4);
    auto decoded = isa::Decode(bytes);
    if (!decoded.ok()) throw InstrumentError("undecodable instruction at " + Hex(gla));
    const Instruction& i = decoded.instruction();
    const uint32_t next = gla + isa::kInstructionSize;

    auto set_reg = [&](uint8_t reg, std::optional<uint16_t> value) {
      if (reg == isa::kSigReg) st.sig = value;
      if (reg == isa::kRcReg) st.rc = value;
    };
    switch (i.op) {
      case Opcode::kKsw:
        if (!st.sig) throw InstrumentError("key switch at " + Hex(gla) + " with statically unknown signature");
        st.view = *st.sig;
        merge(next, st, gla);
        break;
      case Opcode::kMovi:
        set_reg(i.rd, i.imm);
        merge(next, st, gla);
        break;
      case Opcode::kXori:
        if (i.rd == isa::kSigReg && st.sig) st.sig = static_cast<Signature>(*st.sig ^ i.imm);
        if (i.rd == isa::kRcReg && st.rc) st.rc = static_cast<uint16_t>(*st.rc ^ i.imm);
        merge(next, st, gla);
        break;
      case Opcode::kXor:
        if (i.rd == isa::kSigReg) {
          if (i.rs == isa::kRcReg && st.sig && st.rc) {
            st.sig = static_cast<Signature>(*st.sig ^ *st.rc);
          } else if (i.rs == isa::kSigReg) {
            st.sig = 0;
          } else {
            st.sig.reset();
          }
        } else if (i.rd == isa::kRcReg) {
          st.rc.reset();
        }
        merge(next, st, gla);
        break;
      case Opcode::kCall:
        calls.push_back({gla, i.imm, st.view});
        merge(next, st, gla);
        break;
      case Opcode::kCallr:
        merge(next, st, gla);
        break;
      case Opcode::kRet: {
        const size_t k = seed_of[s];
        const Signature expect = k == SIZE_MAX ? st.view : seeds[k].signature;
        if (st.sig != expect || st.view != expect) {
          throw InstrumentError("return at " + Hex(gla) + " leaves with view " + std::to_string(st.view) +
                                " but its segment was entered with " + std::to_string(expect));
        }
        break;
      }
      case Opcode::kJmp:
        merge(i.imm, st, gla);
        break;
      case Opcode::kBeqz:
        merge(i.imm, st, gla);
        merge(next, st, gla);
        break;
      case Opcode::kHlt:
        break;
      default:
        if (WritesRegister(i, isa::kSigReg)) set_reg(isa::kSigReg, std::nullopt);
        if (WritesRegister(i, isa::kRcReg)) set_reg(isa::kRcReg, std::nullopt);
        merge(next, st, gla);
        break;
    }
  }

  const uint32_t slots_per_block = block_size / isa::kInstructionSize;
  const size_t blocks = (slots + slots_per_block - 1) / slots_per_block;
  std::vector<Signature> domain(blocks, kDefaultUserSignature);
  for (size_t b = 0; b < blocks; ++b) {
    std::optional<Signature> view;
    size_t owner = SIZE_MAX;
    for (size_t s = b * slots_per_block; s < std::min(slots, (b + 1) * slots_per_block); ++s) {
      if (owner == SIZE_MAX) owner = seed_of[s];
      if (!at[s]) continue;
      if (view && *view != at[s]->view) {
        throw InstrumentError("block at " + Hex(code_base + static_cast<uint32_t>(b * block_size)) +
                              " is fetched under views " + std::to_string(*view) + " and " +
                              std::to_string(at[s]->view));
      }
      view = at[s]->view;
    }
    if (view) {
      domain[b] = *view;
    } else if (owner != SIZE_MAX) {
      domain[b] = seeds[owner].signature;
    }
  }

  for (const auto& c : calls) {
    if (c.target < code_base || c.target >= code_end) {
      throw InstrumentError("call at " + Hex(c.from) + " targets " + Hex(c.target) + " outside code");
    }
    const Signature target_domain = domain[(c.target - code_base) / block_size];
    if (target_domain != c.view) {
      throw InstrumentError("call at " + Hex(c.from) + " runs under view " + std::to_string(c.view) +
                            " but its target is in domain " + std::to_string(target_domain));
    }
  }
  return domain;
}

Layout AlignAndMap(const std::vector<Segment>& segments, uint32_t block_size, uint16_t code_base,
                   size_t entry_segment) {
  if (block_size == 0 || block_size % isa::kInstructionSize) {
    throw InstrumentError("block size must be a positive multiple of 4");
  }
  (void)entry_segment;
  Layout out;
  std::vector<std::vector<uint32_t>> item_addr(segments.size());
  std::vector<CodeItem> placed;  // flattened, including padding
  uint32_t addr = code_base;
  auto emit = [&](const CodeItem& item) {
    placed.push_back(item);
    out.slot_kinds.push_back(static_cast<char>(item.kind));
    addr += isa::kInstructionSize;
  };
  auto pad = [&] { emit(Item(Opcode::kNop, SlotKind::kPadding)); };

  for (size_t k = 0; k < segments.size(); ++k) {
    const Segment& seg = segments[k];
    while ((addr - code_base) % block_size) pad();
    out.segment_starts.push_back(static_cast<uint16_t>(addr));
    if (!out.function_starts.count(seg.function)) out.function_starts[seg.function] = static_cast<uint16_t>(addr);
    switch (seg.kind) {
      case SegmentKind::kHeader:
        if (seg.indirect) {
          out.indirect_headers[seg.function] = static_cast<uint16_t>(addr);
        } else {
          out.direct_headers[seg.site] = static_cast<uint16_t>(addr);
        }
        break;
      case SegmentKind::kBody:
      case SegmentKind::kExternal:
        out.bodies[seg.function] = static_cast<uint16_t>(addr);
        break;
    }
    for (const auto& item : seg.items) {
      if (item.instruction.op == Opcode::kKsw) {
        while ((addr - code_base) % block_size != block_size - isa::kInstructionSize) pad();
      }
      item_addr[k].push_back(addr);
      for (const auto& l : item.labels) out.labels[l] = static_cast<uint16_t>(addr);
      emit(item);
    }
    while ((addr - code_base) % block_size) pad();
    out.segment_ends.push_back(addr);
  }
  if (addr > layout::kCodeLimit) throw InstrumentError("instrumented code does not fit below the data region");

  auto resolve = [&](const CodeRef& ref) -> uint16_t {
    auto lookup = [&](const auto& map, const auto& key, const char* what) -> uint32_t {
      auto it = map.find(key);
      if (it == map.end()) throw InstrumentError(std::string("unresolved ") + what);
      return it->second;
    };
    uint32_t base = 0;
    switch (ref.kind) {
      case CodeRef::Kind::kNone:
        return 0;
      case CodeRef::Kind::kLabel:
        base = lookup(out.labels, ref.name, "label");
        break;
      case CodeRef::Kind::kData:
        base = layout::kDataBase;
        break;
      case CodeRef::Kind::kBody:
        base = lookup(out.bodies, ref.name, "function body");
        break;
      case CodeRef::Kind::kDirectHeader:
        base = lookup(out.direct_headers, ref.site, "call header");
        break;
      case CodeRef::Kind::kIndirectHeader:
        base = lookup(out.indirect_headers, ref.name, "indirect header");
        break;
      case CodeRef::Kind::kFunctionStart:
        base = lookup(out.function_starts, ref.name, "function");
        break;
      case CodeRef::Kind::kFunctionValue:
        if (auto it = out.indirect_headers.find(ref.name); it != out.indirect_headers.end()) {
          base = it->second;
        } else {
          base = lookup(out.bodies, ref.name, "function");
        }
        break;
    }
    return static_cast<uint16_t>(base + ref.addend);
  };

  out.code.reserve(placed.size() * isa::kInstructionSize);
  for (const auto& item : placed) {
    Instruction ins = item.instruction;
    if (item.ref.kind != CodeRef::Kind::kNone) ins.imm = resolve(item.ref);
    auto bytes = isa::Encode(ins);
    out.code.insert(out.code.end(), bytes.begin(), bytes.end());
  }

  std::vector<KeyFlowSeed> seeds;
  for (size_t k = 0; k < segments.size(); ++k) {
    seeds.push_back({out.segment_starts[k], out.segment_ends[k], segments[k].signature});
  }
  auto domains = AnalyzeKeyFlow(out.code, code_base, block_size, seeds);
  for (size_t b = 0; b < domains.size(); ++b) {
    const uint16_t start = static_cast<uint16_t>(code_base + b * block_size);
    if (!out.key_domains.empty() && out.key_domains.back().signature == domains[b]) {
      out.key_domains.back().length += block_size;
    } else {
      out.key_domains.push_back({start, block_size, domains[b]});
    }
  }
  return out;
}

namespace {

InstrumentedBinary BuildBaseline(const Program& program, const InstrumentConfig& cfg) {
  BaselineImage image = LinkBaseline(program);
  InstrumentedBinary bin;
  bin.code = image.code;
  bin.block_size = cfg.block_size;
  bin.data_size = program.data_size;
  bin.entry_gla = image.function_addresses.at(program.functions[program.entry_index()].name);
  bin.entry_signature = kDefaultUserSignature;
  bin.slot_kinds.assign(image.code.size() / isa::kInstructionSize, static_cast<char>(SlotKind::kOriginal));
  bin.key_domains.push_back(
      {layout::kCodeBase, RoundUp(static_cast<uint32_t>(image.code.size()), cfg.block_size), kDefaultUserSignature});
  size_t flat = 0;
  for (const auto& f : program.functions) {
    FunctionInfo info;
    info.name = f.name;
    info.start = info.body_start = image.function_addresses.at(f.name);
    info.size = static_cast<uint32_t>(f.body.size() * isa::kInstructionSize);
    info.signature = kDefaultUserSignature;
    info.external = f.external;
    bin.functions.push_back(info);
    for (const auto& st : f.body) {
      const uint16_t a = image.statement_addresses[flat++];
      if (st.instruction.op == Opcode::kCall || st.instruction.op == Opcode::kCallr) {
        CallSiteInfo site;
        site.call_gla = a;
        site.return_gla = static_cast<uint16_t>(a + isa::kInstructionSize);
        site.caller = f.name;
        site.caller_signature = site.target_signature = kDefaultUserSignature;
        if (st.instruction.op == Opcode::kCall) {
          site.callee = st.symbol;
          site.kind = program.Find(st.symbol)->external ? CallKind::kExternal : CallKind::kDirect;
        } else {
          site.kind = CallKind::kIndirect;
        }
        bin.call_sites.push_back(site);
      }
    }
  }
  bin.stats.baseline_size = bin.stats.instrumented_size = static_cast<uint32_t>(image.code.size());
  bin.stats.call_sites = static_cast<uint32_t>(bin.call_sites.size());
  return bin;
}

}  // namespace

InstrumentedBinary Instrument(const Program& program, const InstrumentConfig& cfg) {
  if (cfg.block_size == 0 || cfg.block_size % isa::kInstructionSize || cfg.block_size > 64) {
    throw InstrumentError("block size must be a multiple of 4 no larger than 64");
  }
  if (!cfg.instrument) return BuildBaseline(program, cfg);

  for (const auto& f : program.functions) {
    for (const auto& st : f.body) {
      const auto& i = st.instruction;
      if (i.op == Opcode::kKsw) {
        throw InstrumentError("line " + std::to_string(st.line) + ": KSW is reserved for instrumentation");
      }
      if (!f.external && (UsesRegister(i, isa::kSigReg) || UsesRegister(i, isa::kRcReg))) {
        throw InstrumentError("line " + std::to_string(st.line) + ": r13/r14 are reserved for the signature and return constant");
      }
    }
  }

  const SignatureMap sigs = AssignSignatures(program, cfg.range, cfg.seed, cfg.headers);

  std::vector<Segment> segments;
  std::vector<SiteRecord> sites;
  size_t entry_segment = 0;

  for (size_t fi = 0; fi < program.functions.size(); ++fi) {
    const Function& f = program.functions[fi];
    if (f.external) {
      Segment seg;
      seg.kind = SegmentKind::kExternal;
      seg.function = f.name;
      seg.signature = kDefaultUserSignature;
      for (const auto& st : f.body) {
        CodeItem item = OriginalItem(program, st);
        item.labels = st.labels;
        if (st.instruction.op == Opcode::kCall) {
          if (!program.Find(st.symbol)->external) {
            throw InstrumentError("line " + std::to_string(st.line) + ": extern function '" + f.name +
                                  "' cannot call protected function '" + st.symbol + "'");
          }
          item.ref.kind = CodeRef::Kind::kFunctionStart;
        }
        seg.items.push_back(std::move(item));
      }
      segments.push_back(std::move(seg));
      continue;
    }

    const Signature body_sig = sigs.body.at(f.name);
    if (cfg.headers) {
      for (const auto& [site, hsig] : sigs.direct_headers) {
        const auto& st = program.functions[site.function].body[site.statement];
        if (st.symbol != f.name) continue;
        Segment seg;
        seg.kind = SegmentKind::kHeader;
        seg.function = f.name;
        seg.signature = hsig;
        seg.site = site;
        seg.items = SynthesizeHeader(f.name, hsig, body_sig);
        segments.push_back(std::move(seg));
      }
      if (auto c = sigs.class_of_function.find(f.name); c != sigs.class_of_function.end()) {
        Segment seg;
        seg.kind = SegmentKind::kHeader;
        seg.function = f.name;
        seg.signature = sigs.classes[c->second].signature;
        seg.indirect = true;
        seg.items = SynthesizeHeader(f.name, seg.signature, body_sig);
        segments.push_back(std::move(seg));
      }
    }

    Segment body;
    body.kind = SegmentKind::kBody;
    body.function = f.name;
    body.signature = body_sig;
    if (f.entry) {
      entry_segment = segments.size();
      body.items.push_back(Item(Opcode::kMovi, SlotKind::kEntryInit, isa::kSigReg, 0, sigs.entry));
    }
    for (size_t si = 0; si < f.body.size(); ++si) {
      const Statement& st = f.body[si];
      const size_t first = body.items.size();
      CodeItem item = OriginalItem(program, st);
      const bool is_call = st.instruction.op == Opcode::kCall || st.instruction.op == Opcode::kCallr;
      if (!is_call) {
        body.items.push_back(std::move(item));
      } else {
        SiteRecord rec;
        rec.segment = segments.size();
        rec.caller = f.name;
        rec.caller_signature = body_sig;
        Signature target = kDefaultUserSignature;
        if (st.instruction.op == Opcode::kCall) {
          const Function* callee = program.Find(st.symbol);
          rec.callee = st.symbol;
          if (callee->external) {
            rec.kind = CallKind::kExternal;
            item.ref.kind = CodeRef::Kind::kFunctionStart;
          } else if (cfg.headers) {
            target = sigs.direct_headers.at({fi, si});
            item.ref.kind = CodeRef::Kind::kDirectHeader;
            item.ref.site = {fi, si};
          } else {
            target = sigs.body.at(st.symbol);
            item.ref.kind = CodeRef::Kind::kBody;
          }
        } else {
          rec.kind = CallKind::kIndirect;
          if (auto c = sigs.class_of_site.find({fi, si}); c != sigs.class_of_site.end()) {
            target = sigs.classes[c->second].signature;
          } else if (cfg.default_indirect) {
            rec.kind = CallKind::kExternal;
          } else {
            throw InstrumentError("line " + std::to_string(st.line) +
                                  ": indirect call without a .targets set (enable the default-view fallback to allow)");
          }
        }
        rec.target_signature = target;
        auto seq = InstrumentCallSite(item, body_sig, target, cfg.headers);
        for (size_t k = 0; k < seq.size(); ++k) {
          if (seq[k].kind == SlotKind::kOriginal) rec.item = body.items.size() + k;
        }
        sites.push_back(rec);
        for (auto& s : seq) body.items.push_back(std::move(s));
      }
      body.items[first].labels = st.labels;
    }
    segments.push_back(std::move(body));
  }

  Layout lay = AlignAndMap(segments, cfg.block_size, layout::kCodeBase, entry_segment);

  InstrumentedBinary bin;
  bin.instrumented = true;
  bin.headers = cfg.headers;
  bin.code = std::move(lay.code);
  bin.slot_kinds = std::move(lay.slot_kinds);
  bin.key_domains = std::move(lay.key_domains);
  bin.block_size = cfg.block_size;
  bin.data_size = program.data_size;
  bin.entry_gla = lay.segment_starts[entry_segment];
  bin.entry_signature = sigs.entry;

  for (const auto& f : program.functions) {
    FunctionInfo info;
    info.name = f.name;
    info.external = f.external;
    info.start = lay.function_starts.at(f.name);
    info.body_start = lay.bodies.at(f.name);
    info.signature = f.external ? kDefaultUserSignature : sigs.body.at(f.name);
    uint32_t end = 0;
    for (size_t k = 0; k < segments.size(); ++k) {
      if (segments[k].function == f.name) end = std::max(end, lay.segment_ends[k]);
    }
    info.size = end - info.start;
    bin.functions.push_back(info);
  }
  for (size_t k = 0; k < segments.size(); ++k) {
    if (segments[k].kind != SegmentKind::kHeader) continue;
    bin.header_table.push_back({segments[k].function, lay.segment_starts[k], segments[k].signature, segments[k].indirect});
  }

  // Recover call-site addresses: walk the body segments' item addresses.
  {
    std::vector<std::vector<uint32_t>> item_addr(segments.size());
    uint32_t addr = layout::kCodeBase;
    for (size_t k = 0; k < segments.size(); ++k) {
      addr = lay.segment_starts[k];
      for (const auto& item : segments[k].items) {
        if (item.instruction.op == Opcode::kKsw) {
          while ((addr - layout::kCodeBase) % cfg.block_size != cfg.block_size - isa::kInstructionSize) {
            addr += isa::kInstructionSize;
          }
        }
        item_addr[k].push_back(addr);
        addr += isa::kInstructionSize;
      }
    }
    for (const auto& rec : sites) {
      CallSiteInfo info;
      info.call_gla = static_cast<uint16_t>(item_addr[rec.segment][rec.item]);
      info.return_gla = static_cast<uint16_t>(info.call_gla + isa::kInstructionSize);
      info.kind = rec.kind;
      info.caller = rec.caller;
      info.callee = rec.callee;
      info.caller_signature = rec.caller_signature;
      info.target_signature = rec.target_signature;
      bin.call_sites.push_back(info);
    }
  }

  auto& s = bin.stats;
  s.baseline_size = static_cast<uint32_t>(program.instruction_count() * isa::kInstructionSize);
  s.instrumented_size = static_cast<uint32_t>(bin.code.size());
  s.call_sites = static_cast<uint32_t>(sites.size());
  s.headers = static_cast<uint32_t>(bin.header_table.size());
  for (size_t slot = 0; slot < bin.slot_kinds.size(); ++slot) {
    const auto kind = static_cast<SlotKind>(bin.slot_kinds[slot]);
    const uint8_t op = bin.code[slot * isa::kInstructionSize];
    if (op == static_cast<uint8_t>(Opcode::kKsw)) ++s.ksw;
    if (kind == SlotKind::kFooter && op == static_cast<uint8_t>(Opcode::kKsw)) ++s.footers;
    switch (kind) {
      case SlotKind::kHeader:
      case SlotKind::kFooter:
        s.header_footer_bytes += isa::kInstructionSize;
        break;
      case SlotKind::kPrologue:
      case SlotKind::kEpilogue:
      case SlotKind::kEntryInit:
        s.prologue_epilogue_bytes += isa::kInstructionSize;
        break;
      case SlotKind::kPadding:
        s.padding_bytes += isa::kInstructionSize;
        break;
      case SlotKind::kOriginal:
        break;
    }
  }
  return bin;
}

std::string InstrumentationReport(const InstrumentedBinary& bin) {
  const auto& s = bin.stats;
  std::ostringstream os;
  os << "instrumented = " << (bin.instrumented ? "true" : "false") << '\n'
     << "headers_enabled = " << (bin.headers ? "true" : "false") << '\n'
     << "block_size = " << bin.block_size << '\n'
     << "entry = " << Hex(bin.entry_gla) << " signature " << bin.entry_signature << '\n'
     << "key_domains = " << bin.key_domains.size() << '\n'
     << "call_sites = " << s.call_sites << '\n'
     << "headers = " << s.headers << '\n'
     << "footers = " << s.footers << '\n'
     << "ksw = " << s.ksw << '\n'
     << "baseline_bytes = " << s.baseline_size << '\n'
     << "instrumented_bytes = " << s.instrumented_size << '\n'
     << "header_footer_bytes = " << s.header_footer_bytes << '\n'
     << "prologue_epilogue_bytes = " << s.prologue_epilogue_bytes << '\n'
     << "padding_bytes = " << s.padding_bytes << '\n';
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "code_size_overhead_percent = " << s.overhead_percent() << '\n';
  return os.str();
}

}  // namespace keyflow
