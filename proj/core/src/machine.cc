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

#include "keyflow/machine.h"

#include <sstream>

#include "json.hpp"

namespace keyflow {

using isa::Opcode;

namespace {

std::string Hex(uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

constexpr uint32_t kBlockMask = ~static_cast<uint32_t>(kCipherBlockSize - 1);

}  // namespace

std::string_view RunStatusName(RunStatus s) {
  switch (s) {
    case RunStatus::kHalted: return "halted";
    case RunStatus::kTrapped: return "trapped";
    case RunStatus::kTimeout: return "timeout";
  }
  return "?";
}

std::string Outcome::ToJson() const {
  nlohmann::json j;
  j["outcome"] = std::string(RunStatusName(status));
  j["output"] = output;
  j["registers"] = regs;
  j["pc"] = pc;
  j["counters"] = {{"committed", counters.committed},
                   {"ksw", counters.ksw},
                   {"calls", counters.calls},
                   {"rets", counters.rets},
                   {"view_switches", counters.view_switches},
                   {"itlb_misses", counters.itlb_misses},
                   {"dtlb_load_misses", counters.dtlb_load_misses},
                   {"dtlb_store_misses", counters.dtlb_store_misses},
                   {"tlb_misses", counters.tlb_misses()}};
  if (trap) {
    j["trap"] = {{"kind", std::string(TrapKindName(trap->kind))},
                 {"pc", trap->pc},
                 {"committed", trap->committed},
                 {"detail", trap->detail}};
  }
  return j.dump(2);
}

Machine::Machine(Mmu mmu, HostMemory memory, CryptoEngine engine, MachineOptions options)
    : mmu_(std::move(mmu)), memory_(std::move(memory)), engine_(std::move(engine)), options_(options) {}

Counters Machine::counters() const {
  Counters c = counters_;
  const MmuCounters& m = mmu_.counters();
  c.view_switches = m.view_switches;
  c.itlb_misses = m.itlb_misses;
  c.dtlb_load_misses = m.dtlb_load_misses;
  c.dtlb_store_misses = m.dtlb_store_misses;
  return c;
}

Outcome Machine::Snapshot() const {
  Outcome o;
  o.status = halted_ ? RunStatus::kHalted : trap_ ? RunStatus::kTrapped : RunStatus::kTimeout;
  o.output = output_;
  o.regs = regs;
  o.pc = pc;
  o.counters = counters();
  o.trap = trap_;
  o.activation = activation_;
  return o;
}

Outcome Machine::Run(uint64_t max_steps) {
  for (uint64_t n = 0; n < max_steps && !done(); ++n) Step();
  return Snapshot();
}

std::optional<Trap> Machine::Step() {
  if (done()) return trap_;
  const uint16_t at = pc;
  try {
    const isa::Instruction i = Fetch();
    const uint64_t index = counters_.committed;
    Execute(i);
    ++counters_.committed;
    if (observer_) observer_(*this, StepEvent{index, at, i, pc});
  } catch (const MachineFault& f) {
    trap_ = Trap{f.kind(), at, counters_.committed, f.what()};
  }
  return trap_;
}

// An entry naming a key id the engine was never configured for is an EPT
// misconfiguration, not a crypto error.
void Machine::CheckKeyId(KeyId kid) const {
  if (kid >= engine_.capacity()) {
    throw MachineFault(TrapKind::kTranslation, "key id " + std::to_string(kid) + " not configured");
  }
}

Block Machine::LoadBlock(uint32_t block_hpa, KeyId kid) {
  if (!memory_.Contains(block_hpa, kCipherBlockSize)) {
    throw MachineFault(TrapKind::kTranslation, "host address " + Hex(block_hpa) + " outside memory");
  }
  CheckKeyId(kid);
  const Block ct = memory_.ReadBlock(block_hpa);
  if (options_.integrity && engine_.Tag(kid, block_hpa, ct) != memory_.tag(block_hpa)) {
    throw MachineFault(TrapKind::kIntegrity, "integrity tag mismatch at host block " + Hex(block_hpa));
  }
  return engine_.Decrypt(kid, block_hpa, ct);
}

void Machine::StoreBlock(uint32_t block_hpa, KeyId kid, const Block& plain) {
  if (!memory_.Contains(block_hpa, kCipherBlockSize)) {
    throw MachineFault(TrapKind::kTranslation, "host address " + Hex(block_hpa) + " outside memory");
  }
  CheckKeyId(kid);
  const Block ct = engine_.Encrypt(kid, block_hpa, plain);
  memory_.WriteBlock(block_hpa, ct);
  if (options_.integrity) memory_.set_tag(block_hpa, engine_.Tag(kid, block_hpa, ct));
}

void Machine::WriteBlockThroughView(size_t view, uint16_t gla, const Block& plaintext) {
  const Translation t = mmu_.Walk(view, gla, Access::kLoad);
  StoreBlock(t.hpa & kBlockMask, t.kid, plaintext);
}

Block Machine::ReadBlockThroughView(size_t view, uint16_t gla) {
  const Translation t = mmu_.Walk(view, gla, Access::kLoad);
  const uint32_t hpa = t.hpa & kBlockMask;
  return engine_.Decrypt(t.kid, hpa, memory_.ReadBlock(hpa));
}

isa::Instruction Machine::Fetch() {
  if (pc % isa::kInstructionSize) {
    throw MachineFault(TrapKind::kDecode, "misaligned fetch at " + Hex(pc));
  }
  const Translation t = mmu_.Translate(pc, Access::kFetch);
  const uint32_t block = t.hpa & kBlockMask;
  if (watch_block_ && *watch_block_ == block) {
    activation_ = counters_.committed;
    watch_block_.reset();
  }
  const Block plain = LoadBlock(block, t.kid);
  const size_t off = t.hpa - block;
  std::span<const uint8_t, 4> slot(plain.data() + off, 4);
  const isa::DecodeResult r = isa::Decode(slot);
  if (!r.ok()) throw MachineFault(TrapKind::kDecode, r.fault().Describe() + " at " + Hex(pc));
  return r.instruction();
}

uint16_t Machine::LoadWord(uint16_t gla) {
  const uint16_t gla1 = static_cast<uint16_t>(gla + 1);
  const Translation t0 = mmu_.Translate(gla, Access::kLoad);
  Translation t1{t0.hpa + 1, t0.kid};
  if (mmu_.maps().PageOf(gla1) != mmu_.maps().PageOf(gla)) t1 = mmu_.Translate(gla1, Access::kLoad);
  const Block b0 = LoadBlock(t0.hpa & kBlockMask, t0.kid);
  const uint8_t lo = b0[t0.hpa % kCipherBlockSize];
  uint8_t hi;
  if ((t1.hpa & kBlockMask) == (t0.hpa & kBlockMask) && t1.kid == t0.kid) {
    hi = b0[t1.hpa % kCipherBlockSize];
  } else {
    hi = LoadBlock(t1.hpa & kBlockMask, t1.kid)[t1.hpa % kCipherBlockSize];
  }
  return static_cast<uint16_t>(lo | hi << 8);
}

void Machine::StoreWord(uint16_t gla, uint16_t value) {
  const uint16_t gla1 = static_cast<uint16_t>(gla + 1);
  const Translation t0 = mmu_.Translate(gla, Access::kStore);
  Translation t1{t0.hpa + 1, t0.kid};
  if (mmu_.maps().PageOf(gla1) != mmu_.maps().PageOf(gla)) t1 = mmu_.Translate(gla1, Access::kStore);
  const uint8_t bytes[2] = {static_cast<uint8_t>(value), static_cast<uint8_t>(value >> 8)};
  const Translation ts[2] = {t0, t1};
  for (int k = 0; k < 2; ++k) {
    const uint32_t block = ts[k].hpa & kBlockMask;
    Block b = LoadBlock(block, ts[k].kid);
    b[ts[k].hpa % kCipherBlockSize] = bytes[k];
    StoreBlock(block, ts[k].kid, b);
  }
}

void Machine::Push(uint16_t value) {
  const uint16_t sp = regs[isa::kSpReg];
  if (sp < options_.stack_base || sp > 0xFFFE) throw MachineFault(TrapKind::kStack, "stack overflow, sp " + Hex(sp));
  StoreWord(sp, value);
  regs[isa::kSpReg] = static_cast<uint16_t>(sp - 2);
}

uint16_t Machine::Pop() {
  const uint32_t sp = regs[isa::kSpReg] + 2u;
  if (sp > 0xFFFE) throw MachineFault(TrapKind::kStack, "return with empty stack");
  if (sp < options_.stack_base) throw MachineFault(TrapKind::kStack, "stack pointer below stack, sp " + Hex(sp));
  const uint16_t v = LoadWord(static_cast<uint16_t>(sp));
  regs[isa::kSpReg] = static_cast<uint16_t>(sp);
  return v;
}

uint16_t Machine::Read(uint8_t reg) {
  uint16_t v = regs[reg];
  if (transient_flip_ && transient_flip_->first == reg) {
    v ^= transient_flip_->second;
    transient_flip_.reset();
  }
  return v;
}

void Machine::Write(uint8_t reg, uint16_t value) {
  if (transient_flip_ && transient_flip_->first == reg) transient_flip_.reset();
  regs[reg] = value;
}

void Machine::Execute(const isa::Instruction& i) {
  const uint16_t next = static_cast<uint16_t>(pc + isa::kInstructionSize);
  uint16_t new_pc = next;
  switch (i.op) {
    case Opcode::kNop:
      break;
    case Opcode::kMovi:
      Write(i.rd, i.imm);
      break;
    case Opcode::kMov:
      Write(i.rd, Read(i.rs));
      break;
    case Opcode::kAdd: {
      const uint16_t a = Read(i.rd), b = Read(i.rs);
      Write(i.rd, static_cast<uint16_t>(a + b));
      break;
    }
    case Opcode::kSub: {
      const uint16_t a = Read(i.rd), b = Read(i.rs);
      Write(i.rd, static_cast<uint16_t>(a - b));
      break;
    }
    case Opcode::kXor: {
      const uint16_t a = Read(i.rd), b = Read(i.rs);
      Write(i.rd, static_cast<uint16_t>(a ^ b));
      break;
    }
    case Opcode::kXori:
      Write(i.rd, static_cast<uint16_t>(Read(i.rd) ^ i.imm));
      break;
    case Opcode::kLdr:
      Write(i.rd, LoadWord(Read(i.rs)));
      break;
    case Opcode::kStr: {
      const uint16_t v = Read(i.rd);
      StoreWord(Read(i.rs), v);
      break;
    }
    case Opcode::kCall:
    case Opcode::kCallr: {
      uint16_t target = i.op == Opcode::kCall ? i.imm : Read(i.rd);
      Push(next);
      if (call_flip_) {
        target ^= *call_flip_;
        call_flip_.reset();
        activation_ = counters_.committed + 1;
      }
      ++counters_.calls;
      new_pc = target;
      break;
    }
    case Opcode::kRet: {
      uint16_t target = Pop();
      if (redirect_ && redirect_->first == target) {
        target = redirect_->second;
        redirect_.reset();
        activation_ = counters_.committed + 1;
      }
      ++counters_.rets;
      new_pc = target;
      break;
    }
    case Opcode::kJmp:
      new_pc = i.imm;
      break;
    case Opcode::kBeqz:
      if (Read(i.rd) == 0) new_pc = i.imm;
      break;
    case Opcode::kKsw:
      mmu_.KeySwitch(Read(isa::kSigReg));
      ++counters_.ksw;
      break;
    case Opcode::kHlt:
      halted_ = true;
      new_pc = pc;
      break;
    case Opcode::kOut:
      output_.push_back(Read(i.rd));
      break;
  }
  pc = new_pc;
}

void Machine::FlipPcBit(int bit) {
  pc ^= static_cast<uint16_t>(1u << bit);
  MarkActivation();
}

void Machine::FlipRegisterBit(uint8_t reg, int bit, bool transient) {
  const uint16_t mask = static_cast<uint16_t>(1u << bit);
  if (transient) {
    transient_flip_ = {reg, mask};
  } else {
    regs[reg] ^= mask;
  }
  MarkActivation();
}

void Machine::FlipCodeBit(uint16_t gla, int bit) {
  const Translation t = mmu_.Walk(kDefaultUserView, gla, Access::kLoad);
  memory_.FlipBit(t.hpa, bit);
  watch_block_ = t.hpa & kBlockMask;
}

void Machine::SkipInstruction() {
  pc = static_cast<uint16_t>(pc + isa::kInstructionSize);
  MarkActivation();
}

}  // namespace keyflow
