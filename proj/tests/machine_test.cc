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

#include <gtest/gtest.h>

#include <set>

#include "keyflow/loader.h"
#include "testing.h"

namespace keyflow {
namespace {

using isa::Opcode;

Outcome RunSource(const std::string& src, bool instrument, uint64_t max_steps = 100000) {
  InstrumentConfig ic;
  ic.instrument = instrument;
  Machine m = Load(Instrument(Assemble(src), ic), SystemConfig{});
  return m.Run(max_steps);
}

TEST(Machine, OutAndHalt) {
  const std::string src = ".func main\n MOVI r1, 42\n OUT r1\n HLT\n.endfunc\n";
  const Outcome base = RunSource(src, false);
  EXPECT_EQ(base.status, RunStatus::kHalted);
  EXPECT_EQ(base.output, std::vector<uint16_t>{42});
  const Outcome inst = RunSource(src, true);
  EXPECT_EQ(inst.output, std::vector<uint16_t>{42});
  EXPECT_EQ(inst.counters.ksw, 0u);
}

TEST(Machine, InstrumentedCallCountsFourKsw) {
  const std::string src = ".func main entry\n CALL a\n OUT r0\n HLT\n.endfunc\n.func a\n MOVI r0, 9\n RET\n.endfunc\n";
  const Outcome o = RunSource(src, true);
  EXPECT_EQ(o.status, RunStatus::kHalted);
  EXPECT_EQ(o.output, std::vector<uint16_t>{9});
  EXPECT_EQ(o.counters.ksw, 4u);
  EXPECT_EQ(o.counters.view_switches, 4u);
}

TEST(Machine, CallPushesReturnAddress) {
  // 62 NOPs in `pad` put `f` at 0x100 in the baseline image.
  std::string src = ".func main entry\n CALL f\n HLT\n.endfunc\n.func pad\n";
  for (int i = 0; i < 62; ++i) src += " NOP\n";
  src += ".endfunc\n.func f\n RET\n.endfunc\n";
  InstrumentConfig ic;
  ic.instrument = false;
  Machine m = Load(Instrument(Assemble(src), ic), SystemConfig{});
  ASSERT_FALSE(m.Step().has_value());
  EXPECT_EQ(m.pc, 0x0100);
  EXPECT_EQ(m.regs[isa::kSpReg], 0xFFFC);
  const Block top = m.ReadBlockThroughView(kDefaultUserView, 0xFFF0);
  EXPECT_EQ(top[14] | top[15] << 8, 4);
  ASSERT_FALSE(m.Step().has_value());
  EXPECT_EQ(m.pc, 4);
  EXPECT_EQ(m.regs[isa::kSpReg], 0xFFFE);
}

TEST(Machine, KswSwitchesView) {
  const auto b = testing::BuildCorpus("direct_calls");
  Machine m = Load(b, SystemConfig{});
  while (!m.done()) {
    const auto op = static_cast<Opcode>(m.ReadBlockThroughView(m.mmu().active_view(), m.pc & ~15)[m.pc & 15]);
    const uint64_t before = m.counters().ksw;
    m.Step();
    if (op == Opcode::kKsw) {
      EXPECT_EQ(m.counters().ksw, before + 1);
      EXPECT_EQ(m.mmu().active_view(), m.regs[isa::kSigReg]);
      break;
    }
  }
}

TEST(Machine, TimeoutOnEndlessLoop) {
  const Outcome o = RunSource(".func main\nl: JMP l\n.endfunc\n", false, 10);
  EXPECT_EQ(o.status, RunStatus::kTimeout);
  EXPECT_EQ(o.counters.committed, 10u);
}

TEST(Machine, StackOverflowTraps) {
  const Outcome o = RunSource(".func main\n CALL main\n.endfunc\n", false);
  ASSERT_EQ(o.status, RunStatus::kTrapped);
  EXPECT_EQ(o.trap->kind, TrapKind::kStack);
  EXPECT_EQ(o.counters.calls, 512u);  // 1024-byte stack, 2-byte words
  const Outcome u = RunSource(".func main\n RET\n.endfunc\n", false);
  ASSERT_EQ(u.status, RunStatus::kTrapped);
  EXPECT_EQ(u.trap->kind, TrapKind::kStack);
}

TEST(Machine, StoreToCodeTraps) {
  const Outcome o = RunSource(".func main\n MOVI r1, 0\n STR r1, r1\n HLT\n.endfunc\n", false);
  ASSERT_EQ(o.status, RunStatus::kTrapped);
  EXPECT_EQ(o.trap->kind, TrapKind::kTranslation);
}

TEST(Machine, MisalignedJumpTraps) {
  const Outcome o = RunSource(".func main\n MOVI r1, 2\n CALLR r1\n HLT\n.endfunc\n", false);
  ASSERT_EQ(o.status, RunStatus::kTrapped);
  EXPECT_EQ(o.trap->kind, TrapKind::kDecode);
}

TEST(Machine, WrongKeyFetchIsGarbled) {
  // Jump straight into a foreign key domain without a key switch.
  const auto b = testing::BuildCorpus("two_domain", {}, true, false);
  Machine m = Load(b, SystemConfig{});
  const auto* mix = b.FunctionAt(b.functions.back().start);
  ASSERT_NE(mix, nullptr);
  m.pc = mix->body_start;
  const Outcome o = m.Run(100);
  EXPECT_NE(o.status, RunStatus::kHalted);
}

class CorpusMachine : public ::testing::TestWithParam<std::string> {};

TEST_P(CorpusMachine, TransparentAgainstBaseline) {
  const auto inst = testing::BuildCorpus(GetParam());
  const auto base = testing::BuildCorpus(GetParam(), {}, false);
  const Outcome a = Load(inst, SystemConfig{}).Run(1000000);
  const Outcome b = Load(base, SystemConfig{}).Run(1000000);
  ASSERT_EQ(a.status, RunStatus::kHalted);
  ASSERT_EQ(b.status, RunStatus::kHalted);
  EXPECT_EQ(a.output, b.output);
  for (int r = 0; r <= 12; ++r) EXPECT_EQ(a.regs[r], b.regs[r]) << "r" << r;
}

TEST_P(CorpusMachine, DynamicSignatureMatchesStaticDomain) {
  const auto b = testing::BuildCorpus(GetParam());
  Machine m = Load(b, SystemConfig{});
  uint64_t checked = 0;
  m.set_observer([&](const Machine& mm, const StepEvent& e) {
    if (e.instruction.op == Opcode::kKsw) {
      EXPECT_EQ(b.DomainAt(e.next_pc), mm.regs[isa::kSigReg]) << "KSW at " << e.pc;
      ++checked;
    }
    // Returns land in the domain they left from.
    if (e.instruction.op == Opcode::kRet) {
      EXPECT_EQ(b.DomainAt(e.next_pc), b.DomainAt(e.pc)) << "RET at " << e.pc;
    }
  });
  EXPECT_EQ(m.Run(1000000).status, RunStatus::kHalted);
  EXPECT_EQ(checked, m.counters().ksw);
}

TEST_P(CorpusMachine, DynamicKswCountIsExact) {
  const auto b = testing::BuildCorpus(GetParam());
  std::set<uint16_t> header_starts, returns;
  for (const auto& h : b.header_table) header_starts.insert(h.start);
  for (const auto& s : b.call_sites) returns.insert(s.return_gla);
  uint64_t calls = 0, returned = 0, headers = 0, footers = 0;
  Machine m = Load(b, SystemConfig{});
  m.set_observer([&](const Machine&, const StepEvent& e) {
    const auto* fn = b.FunctionAt(e.pc);
    const bool protected_site = b.KindAt(e.pc) == SlotKind::kOriginal && fn && !fn->external;
    if (protected_site && (e.instruction.op == Opcode::kCall || e.instruction.op == Opcode::kCallr)) ++calls;
    if (returns.count(e.pc)) ++returned;
    if (header_starts.count(e.pc)) ++headers;
    if (e.instruction.op == Opcode::kXor && e.instruction.rd == isa::kSigReg) ++footers;
  });
  const Outcome o = m.Run(1000000);
  // Each instrumented call switches once on the way in and once when it
  // returns; a program may halt inside a callee.
  EXPECT_EQ(o.counters.ksw, calls + returned + headers + footers);
  if (returned == calls) {
    EXPECT_EQ(o.counters.ksw, 2 * calls + headers + footers);
  }
}

TEST_P(CorpusMachine, KeyRegModeMatchesAliasing) {
  const auto b = testing::BuildCorpus(GetParam());
  SystemConfig kr;
  kr.mode = ExecMode::kKeyReg;
  const Outcome a = Load(b, SystemConfig{}).Run(1000000);
  const Outcome k = Load(b, kr).Run(1000000);
  EXPECT_EQ(a.output, k.output);
  EXPECT_EQ(k.counters.view_switches, 0u);
  EXPECT_EQ(a.counters.ksw, k.counters.ksw);
  EXPECT_LE(k.counters.tlb_misses(), a.counters.tlb_misses());
}

TEST_P(CorpusMachine, IntegrityModeIsTransparent) {
  const auto b = testing::BuildCorpus(GetParam());
  SystemConfig ic;
  ic.integrity = true;
  EXPECT_EQ(Load(b, ic).Run(1000000).output, Load(b, SystemConfig{}).Run(1000000).output);
}

INSTANTIATE_TEST_SUITE_P(Corpus, CorpusMachine, ::testing::ValuesIn(testing::CorpusNames()),
                         [](const auto& info) { return info.param; });

TEST(Machine, OutcomeJsonHasCounters) {
  const std::string j = RunSource(".func main\n HLT\n.endfunc\n", true).ToJson();
  EXPECT_NE(j.find("\"committed\""), std::string::npos);
  EXPECT_NE(j.find("\"halted\""), std::string::npos);
}

}  // namespace
}  // namespace keyflow
