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

#include "keyflow/fault.h"

#include <set>
#include <sstream>

#include "keyflow/rng.h"

namespace keyflow {

namespace {

std::string Hex(uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

// Positions of original-program instructions in a trace.
std::vector<uint64_t> OriginalPositions(const GoldenRun& g) {
  std::vector<uint64_t> out;
  for (uint64_t t = 0; t < g.trace.size(); ++t) {
    if (g.trace[t].slot_kind == static_cast<char>(SlotKind::kOriginal)) out.push_back(t);
  }
  return out;
}

bool IsCall(isa::Opcode op) { return op == isa::Opcode::kCall || op == isa::Opcode::kCallr; }

}  // namespace

std::string_view FaultKindName(FaultKind k) {
  switch (k) {
    case FaultKind::kPcBitflip: return "PC_BITFLIP";
    case FaultKind::kCodeBitflip: return "CODE_BITFLIP";
    case FaultKind::kRegBitflip: return "REG_BITFLIP";
    case FaultKind::kCallTargetBitflip: return "CALLTARGET_BITFLIP";
    case FaultKind::kEpteKeyIdFlip: return "EPTE_KEYID_FLIP";
    case FaultKind::kSkipInstr: return "SKIP_INSTR";
  }
  return "?";
}

std::optional<FaultKind> ParseFaultKind(std::string_view name) {
  if (name == "pc") return FaultKind::kPcBitflip;
  if (name == "code") return FaultKind::kCodeBitflip;
  if (name == "reg") return FaultKind::kRegBitflip;
  if (name == "calltarget") return FaultKind::kCallTargetBitflip;
  if (name == "epte") return FaultKind::kEpteKeyIdFlip;
  if (name == "skip") return FaultKind::kSkipInstr;
  return std::nullopt;
}

void FaultSpec::Validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw FaultError(what);
  };
  switch (kind) {
    case FaultKind::kPcBitflip:
    case FaultKind::kCallTargetBitflip:
      need(bit < 16, "bit index must be < 16");
      break;
    case FaultKind::kCodeBitflip:
      need(bit < 8, "code bit index must be < 8");
      break;
    case FaultKind::kRegBitflip:
      need(reg < isa::kNumRegisters, "register index must be < 16");
      need(bit < 16, "bit index must be < 16");
      break;
    case FaultKind::kEpteKeyIdFlip:
      need(bit < kEptKeyIdBits, "key id bit index must be < 15");
      need(view < kMaxViews, "view index must be < 512");
      break;
    case FaultKind::kSkipInstr:
      break;
  }
}

std::string FaultSpec::Location() const {
  switch (kind) {
    case FaultKind::kPcBitflip: return "pc";
    case FaultKind::kCodeBitflip: return Hex(gla);
    case FaultKind::kRegBitflip: return "r" + std::to_string(reg) + (transient ? "/t" : "/p");
    case FaultKind::kCallTargetBitflip: return Hex(gla);
    case FaultKind::kEpteKeyIdFlip:
      return "v" + std::to_string(view) + ":" + Hex(frame) + (one_shot ? "/once" : "");
    case FaultKind::kSkipInstr: return Hex(gla);
  }
  return "";
}

std::string_view FaultClassName(FaultClass c) {
  switch (c) {
    case FaultClass::kDetectedDecode: return "DETECTED_DECODE";
    case FaultClass::kDetectedTranslation: return "DETECTED_TRANSLATION";
    case FaultClass::kDetectedViewIndex: return "DETECTED_VIEWINDEX";
    case FaultClass::kDetectedIntegrity: return "DETECTED_INTEGRITY";
    case FaultClass::kDetectedStack: return "DETECTED_STACK";
    case FaultClass::kSilentCorruption: return "SILENT_CORRUPTION";
    case FaultClass::kBenign: return "BENIGN";
    case FaultClass::kTimeout: return "TIMEOUT";
  }
  return "?";
}

bool IsDetected(FaultClass c) { return c <= FaultClass::kDetectedStack; }

GoldenRun RecordGolden(const Machine& loaded, const InstrumentedBinary& binary, uint64_t max_steps) {
  Machine m = loaded;
  GoldenRun g;
  m.set_observer([&](const Machine&, const StepEvent& e) {
    g.trace.push_back({e.pc, e.instruction.op, e.next_pc, static_cast<char>(binary.KindAt(e.pc))});
  });
  g.outcome = m.Run(max_steps);
  if (g.outcome.status != RunStatus::kHalted) {
    throw FaultError("golden run did not halt (" + std::string(RunStatusName(g.outcome.status)) + ")");
  }
  return g;
}

void Inject(Machine& m, const FaultSpec& f, bool encrypted_ept) {
  f.Validate();
  switch (f.kind) {
    case FaultKind::kPcBitflip:
      m.FlipPcBit(f.bit);
      break;
    case FaultKind::kCodeBitflip:
      m.FlipCodeBit(f.gla, f.bit);
      break;
    case FaultKind::kRegBitflip:
      m.FlipRegisterBit(f.reg, f.bit, f.transient);
      break;
    case FaultKind::kCallTargetBitflip:
      m.ArmCallTargetFlip(static_cast<uint16_t>(1u << f.bit));
      break;
    case FaultKind::kEpteKeyIdFlip: {
      m.MarkActivation();
      if (f.one_shot && !encrypted_ept) {
        m.mmu().ArmOneShotKeyFlip(static_cast<KeyId>(1u << f.bit));
        break;
      }
      ViewTable& vt = m.mmu().views();
      if (f.view >= vt.size() || !vt.HasFrame(f.frame)) throw FaultError("EPTE fault names a missing entry");
      const uint64_t raw = vt.RawEntry(f.view, f.frame);
      const int pos = kEptKeyIdShift + f.bit;
      if (!encrypted_ept) {
        vt.SetRawEntry(f.view, f.frame, raw ^ (uint64_t{1} << pos));
        break;
      }
      // The entry lives encrypted in memory: the flip hits ciphertext, so the
      // decrypted entry comes out fully garbled.
      const uint64_t tweak = 0xE000000000000000ull | uint64_t{f.view} << 32 | f.frame;
      Block plain{};
      for (int i = 0; i < 8; ++i) plain[i] = static_cast<uint8_t>(raw >> (8 * i));
      Block ct = m.engine().Encrypt(0, tweak, plain);
      ct[pos / 8] ^= static_cast<uint8_t>(1u << (pos % 8));
      const Block garbled = m.engine().Decrypt(0, tweak, ct);
      uint64_t out = 0;
      for (int i = 0; i < 8; ++i) out |= uint64_t{garbled[i]} << (8 * i);
      vt.SetRawEntry(f.view, f.frame, out);
      break;
    }
    case FaultKind::kSkipInstr:
      m.SkipInstruction();
      break;
  }
}

std::vector<FaultSpec> EnumerateOrSample(const Machine& loaded, const InstrumentedBinary& binary,
                                         const GoldenRun& golden, const FaultModel& model, size_t n, uint64_t seed) {
  const uint64_t len = golden.trace.size();
  if (len == 0) throw FaultError("empty fault space: golden run commits no instructions");
  Rng rng(seed);
  std::vector<FaultSpec> out;
  FaultSpec base;
  base.kind = model.kind;

  switch (model.kind) {
    case FaultKind::kPcBitflip:
    case FaultKind::kRegBitflip:
    case FaultKind::kCodeBitflip: {
      if (model.kind == FaultKind::kCodeBitflip && binary.code.empty()) throw FaultError("empty fault space: no code");
      for (size_t i = 0; i < n; ++i) {
        FaultSpec f = base;
        f.trigger = rng.Below(len);
        if (model.kind == FaultKind::kPcBitflip) {
          f.bit = static_cast<uint8_t>(rng.Below(16));
        } else if (model.kind == FaultKind::kRegBitflip) {
          f.reg = static_cast<uint8_t>(rng.Below(isa::kNumRegisters));
          f.bit = static_cast<uint8_t>(rng.Below(16));
          f.transient = model.transient;
        } else {
          f.gla = static_cast<uint16_t>(binary.code_base + rng.Below(binary.code.size()));
          f.bit = static_cast<uint8_t>(rng.Below(8));
        }
        out.push_back(f);
      }
      break;
    }
    case FaultKind::kCallTargetBitflip: {
      std::vector<std::pair<uint64_t, uint8_t>> space;
      for (uint64_t t = 0; t < len; ++t) {
        const TraceEntry& e = golden.trace[t];
        if (!IsCall(e.op) || e.slot_kind != static_cast<char>(SlotKind::kOriginal)) continue;
        for (uint8_t bit = 0; bit < 16; ++bit) {
          if (model.cross_domain) {
            const uint16_t redirected = static_cast<uint16_t>(e.next_pc ^ (1u << bit));
            if (binary.DomainAt(redirected) == binary.DomainAt(e.next_pc)) continue;
          }
          space.emplace_back(t, bit);
        }
      }
      if (space.empty()) throw FaultError("empty fault space: no eligible call executes");
      for (size_t i = 0; i < n; ++i) {
        const auto& [t, bit] = space[rng.Below(space.size())];
        FaultSpec f = base;
        f.trigger = t;
        f.gla = golden.trace[t].pc;
        f.bit = bit;
        out.push_back(f);
      }
      break;
    }
    case FaultKind::kEpteKeyIdFlip: {
      std::set<uint16_t> views;
      for (const auto& d : binary.key_domains) views.insert(d.signature);
      std::vector<uint16_t> view_list(views.begin(), views.end());
      std::vector<uint32_t> frames;
      const AddressMaps& maps = loaded.mmu().maps();
      for (uint32_t a = binary.code_base; a < binary.code_base + binary.code.size(); a += maps.page_size) {
        if (auto fr = maps.FrameOf(a)) frames.push_back(*fr);
      }
      if (view_list.empty() || frames.empty()) throw FaultError("empty fault space: no code entries");
      for (size_t i = 0; i < n; ++i) {
        FaultSpec f = base;
        f.trigger = rng.Below(len);
        f.view = view_list[rng.Below(view_list.size())];
        f.frame = frames[rng.Below(frames.size())];
        f.bit = static_cast<uint8_t>(rng.Below(kEptKeyIdBits));
        f.one_shot = model.one_shot;
        out.push_back(f);
      }
      break;
    }
    case FaultKind::kSkipInstr: {
      const std::vector<uint64_t> pos = OriginalPositions(golden);
      if (pos.empty()) throw FaultError("empty fault space: no original instructions executed");
      auto make = [&](uint64_t t) {
        FaultSpec f = base;
        f.trigger = t;
        f.gla = golden.trace[t].pc;
        return f;
      };
      if (n == 0 || n >= pos.size()) {
        for (uint64_t t : pos) out.push_back(make(t));
      } else {
        for (size_t i = 0; i < n; ++i) out.push_back(make(pos[rng.Below(pos.size())]));
      }
      break;
    }
  }
  return out;
}

std::vector<FaultSpec> RetargetSpecs(const std::vector<FaultSpec>& specs, const GoldenRun& from, const GoldenRun& to) {
  const std::vector<uint64_t> a = OriginalPositions(from), b = OriginalPositions(to);
  std::map<uint64_t, size_t> ordinal;
  for (size_t k = 0; k < a.size(); ++k) ordinal[a[k]] = k;
  std::vector<FaultSpec> out;
  out.reserve(specs.size());
  for (FaultSpec f : specs) {
    if (f.kind != FaultKind::kSkipInstr && f.kind != FaultKind::kCallTargetBitflip) {
      throw FaultError("only SKIP and CALLTARGET faults can be paired across builds");
    }
    auto it = ordinal.find(f.trigger);
    if (it == ordinal.end() || it->second >= b.size()) throw FaultError("fault trigger has no counterpart");
    f.trigger = b[it->second];
    f.gla = to.trace[f.trigger].pc;
    out.push_back(f);
  }
  return out;
}

FaultClass Classify(const Outcome& golden, const Outcome& faulted) {
  switch (faulted.status) {
    case RunStatus::kTrapped:
      switch (faulted.trap->kind) {
        case TrapKind::kDecode: return FaultClass::kDetectedDecode;
        case TrapKind::kTranslation: return FaultClass::kDetectedTranslation;
        case TrapKind::kViewIndex: return FaultClass::kDetectedViewIndex;
        case TrapKind::kIntegrity: return FaultClass::kDetectedIntegrity;
        case TrapKind::kStack: return FaultClass::kDetectedStack;
      }
      break;
    case RunStatus::kHalted:
      return faulted.output == golden.output ? FaultClass::kBenign : FaultClass::kSilentCorruption;
    case RunStatus::kTimeout:
      return FaultClass::kTimeout;
  }
  return FaultClass::kTimeout;
}

}  // namespace keyflow
