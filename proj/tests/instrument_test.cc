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

#include <map>
#include <set>
#include <span>

#include "keyflow/instrument.h"
#include "testing.h"

namespace keyflow {
namespace {

using isa::Opcode;

isa::Instruction At(const InstrumentedBinary& b, uint32_t gla) {
  auto r = isa::Decode(std::span<const uint8_t, 4>(b.code.data() + (gla - b.code_base), 4));
  EXPECT_TRUE(r.ok()) << "undecodable plaintext at " << gla;
  return r.ok() ? r.instruction() : isa::Instruction{};
}

InstrumentConfig Options(bool headers = true) {
  InstrumentConfig c;
  c.headers = headers;
  return c;
}

TEST(InstrumentCallSite, DirectConstantsAreSymmetric) {
  CodeItem call;
  call.instruction = {Opcode::kCall};
  const auto seq = InstrumentCallSite(call, 0x05, 0x09, false);
  ASSERT_EQ(seq.size(), 5u);
  EXPECT_EQ(seq[0].instruction, (isa::Instruction{Opcode::kXori, isa::kSigReg, 0, 0x0C}));
  EXPECT_EQ(seq[1].instruction.op, Opcode::kKsw);
  EXPECT_EQ(seq[2].instruction.op, Opcode::kCall);
  EXPECT_EQ(seq[3].instruction, (isa::Instruction{Opcode::kXori, isa::kSigReg, 0, 0x0C}));
  EXPECT_EQ(seq[4].instruction.op, Opcode::kKsw);
}

TEST(InstrumentCallSite, ExternalTargetUsesDefaultView) {
  CodeItem call;
  call.instruction = {Opcode::kCall};
  const auto seq = InstrumentCallSite(call, 0x05, kDefaultUserSignature, false);
  EXPECT_EQ(seq[0].instruction.imm, 0x07);
}

TEST(InstrumentCallSite, SpillTouchesOnlyReservedRegisters) {
  CodeItem call;
  call.instruction = {Opcode::kCall};
  for (const auto& item : InstrumentCallSite(call, 3, 4, true)) {
    const Opcode op = item.instruction.op;
    if (op == Opcode::kKsw || op == Opcode::kCall) continue;
    EXPECT_GE(item.instruction.rd, isa::kSigReg);
    if (isa::FormatOf(op) == isa::Format::kR) {
      EXPECT_GE(item.instruction.rs, isa::kSigReg);
    }
  }
}

TEST(SynthesizeHeader, Constants) {
  const auto h = SynthesizeHeader("f", 0x09, 0x04);
  ASSERT_GE(h.size(), 3u);
  EXPECT_EQ(h[0].instruction, (isa::Instruction{Opcode::kXori, isa::kSigReg, 0, 0x0D}));
  EXPECT_EQ(h[1].instruction, (isa::Instruction{Opcode::kMovi, isa::kRcReg, 0, 0x0D}));
  EXPECT_EQ(h[2].instruction.op, Opcode::kKsw);
  EXPECT_EQ(h.back().instruction.op, Opcode::kRet);
}

TEST(SynthesizeFooter, RestoresHeaderSignature) {
  const auto f = SynthesizeFooter();
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[0].instruction, (isa::Instruction{Opcode::kXor, isa::kSigReg, isa::kRcReg, 0}));
  EXPECT_EQ(f[1].instruction.op, Opcode::kKsw);
  const uint16_t sig = 0x04, rc = 0x0D;
  EXPECT_EQ(sig ^ rc, 0x09);
}

TEST(AlignAndMap, PadsKswIntoLastSlot) {
  Segment s;
  s.signature = 3;
  s.function = "main";
  auto item = [](isa::Instruction i, SlotKind k) {
    CodeItem c;
    c.instruction = i;
    c.kind = k;
    return c;
  };
  s.items = {item({Opcode::kXori, isa::kSigReg, 0, 0}, SlotKind::kPrologue), item({Opcode::kKsw}, SlotKind::kPrologue),
             item({Opcode::kHlt}, SlotKind::kOriginal)};
  const Layout l = AlignAndMap({s}, 16, 0, 0);
  // KSW would land in slot 1, so two NOPs go in front of it.
  EXPECT_EQ(l.slot_kinds.substr(0, 5), "pnnpo");
  ASSERT_GE(l.code.size(), 20u);
  EXPECT_EQ(l.code[4], 0x00);
  EXPECT_EQ(l.code[8], 0x00);
  EXPECT_EQ(l.code[12], static_cast<uint8_t>(Opcode::kKsw));
  EXPECT_EQ(l.code[16], static_cast<uint8_t>(Opcode::kHlt));
  ASSERT_EQ(l.key_domains.size(), 1u);
  EXPECT_EQ(l.key_domains[0].signature, 3);
}

TEST(AlignAndMap, InconsistentKeyFlowIsRejected) {
  Segment s;
  s.signature = 3;
  CodeItem ksw;
  ksw.instruction = {Opcode::kXori, isa::kSigReg, 0, 7};
  ksw.kind = SlotKind::kPrologue;
  CodeItem sw;
  sw.instruction = {Opcode::kKsw};
  sw.kind = SlotKind::kPrologue;
  CodeItem jmp;
  jmp.instruction = {Opcode::kJmp, 0, 0, 0};  // back to the start under the new view
  s.items = {ksw, sw, jmp};
  EXPECT_THROW(AlignAndMap({s}, 16, 0, 0), InstrumentError);
}

TEST(Instrument, KswFormulaSmallestCase) {
  const Program p = Assemble(".func main entry\n CALL a\n HLT\n.endfunc\n.func a\n RET\n.endfunc\n");
  const auto b = Instrument(p, Options());
  // prologue + epilogue + header + footer
  EXPECT_EQ(b.stats.ksw, 4u);
  EXPECT_EQ(b.stats.call_sites, 1u);
  EXPECT_EQ(b.stats.headers, 1u);
  EXPECT_EQ(b.stats.footers, 1u);
}

TEST(Instrument, NoCallsMeansNoKsw) {
  const Program p = Assemble(".func main entry\n MOVI r1, 1\n OUT r1\n HLT\n.endfunc\n.func spare\n RET\n.endfunc\n");
  const auto b = Instrument(p, Options());
  EXPECT_EQ(b.stats.ksw, 0u);
  EXPECT_EQ(b.key_domains.size(), 2u);
  EXPECT_NE(b.key_domains[0].signature, b.key_domains[1].signature);
}

TEST(Instrument, BaselineIsOneDefaultDomain) {
  InstrumentConfig c;
  c.instrument = false;
  const auto b = Instrument(testing::CorpusProgram("nested"), c);
  ASSERT_EQ(b.key_domains.size(), 1u);
  EXPECT_EQ(b.key_domains[0].signature, kDefaultUserSignature);
  EXPECT_EQ(b.key_domains[0].start, 0);
  EXPECT_EQ(b.key_domains[0].length % b.block_size, 0u);
  EXPECT_GE(b.key_domains[0].length, b.code.size());
  EXPECT_EQ(b.stats.ksw, 0u);
}

TEST(Instrument, EveryKswSitsInLastSlotOfItsBlock) {
  for (const auto& name : testing::CorpusNames()) {
    const auto b = testing::BuildCorpus(name);
    for (uint32_t gla = 0; gla < b.code.size(); gla += 4) {
      if (b.code[gla] == static_cast<uint8_t>(Opcode::kKsw)) {
        EXPECT_EQ(gla % b.block_size, b.block_size - 4) << name << " @" << gla;
      }
    }
  }
}

TEST(Instrument, CallInstructionLivesInTargetDomain) {
  for (const auto& name : testing::CorpusNames()) {
    const auto b = testing::BuildCorpus(name);
    for (const auto& site : b.call_sites) {
      EXPECT_EQ(b.DomainAt(site.call_gla), site.target_signature) << name << " @" << site.call_gla;
      EXPECT_EQ(b.DomainAt(site.return_gla), site.target_signature) << name << " @" << site.return_gla;
    }
  }
}

TEST(Instrument, PrologueConstantReachesTargetSignature) {
  for (const auto& name : testing::CorpusNames()) {
    const auto b = testing::BuildCorpus(name);
    for (const auto& site : b.call_sites) {
      // Walk back from the call to the prologue XORI on SIG.
      uint32_t gla = site.call_gla;
      isa::Instruction x;
      do {
        gla -= 4;
        x = At(b, gla);
      } while (!(x.op == Opcode::kXori && x.rd == isa::kSigReg));
      EXPECT_EQ(b.KindAt(gla), SlotKind::kPrologue);
      EXPECT_EQ(site.caller_signature ^ x.imm, site.target_signature) << name;
    }
  }
}

TEST(Instrument, IndirectSitesShareOneHeaderSignature) {
  const auto b = testing::BuildCorpus("indirect2");
  std::vector<Signature> targets;
  for (const auto& s : b.call_sites) {
    if (s.kind == CallKind::kIndirect) targets.push_back(s.target_signature);
  }
  ASSERT_EQ(targets.size(), 3u);
  EXPECT_EQ(targets[0], targets[1]);
  EXPECT_EQ(targets[1], targets[2]);
  int indirect_headers = 0;
  for (const auto& h : b.header_table) {
    if (h.indirect) {
      ++indirect_headers;
      EXPECT_EQ(h.signature, targets[0]);
    }
  }
  EXPECT_EQ(indirect_headers, 3);
}

TEST(Instrument, OneHeaderPerIncomingDirectEdge) {
  const auto b = testing::BuildCorpus("multi_caller");
  std::map<std::string, int> per_function;
  for (const auto& h : b.header_table) per_function[h.function]++;
  EXPECT_EQ(per_function["B"], 2);
  EXPECT_EQ(per_function["A"], 1);
  EXPECT_EQ(per_function["C"], 1);
  EXPECT_EQ(per_function.count("main"), 0u);  // the loader seeds SIG for the entry
  const auto* main_fn = b.FunctionAt(b.entry_gla);
  ASSERT_NE(main_fn, nullptr);
  EXPECT_EQ(main_fn->name, "main");
  EXPECT_EQ(At(b, b.entry_gla), (isa::Instruction{Opcode::kMovi, isa::kSigReg, 0, b.entry_signature}));
}

TEST(Instrument, HeadersDisabledSharesSignature) {
  const auto b = testing::BuildCorpus("multi_caller", {}, true, false);
  EXPECT_EQ(b.stats.headers, 0u);
  EXPECT_EQ(b.stats.footers, 0u);
  EXPECT_EQ(b.stats.ksw, 2 * b.stats.call_sites);
  const auto two = testing::BuildCorpus("two_domain", {}, true, false);
  std::set<Signature> sigs;
  for (const auto& d : two.key_domains) sigs.insert(d.signature);
  EXPECT_EQ(sigs.size(), 2u);
}

TEST(Instrument, CounterFormulaAndOverheadBreakdown) {
  for (const auto& name : testing::CorpusNames()) {
    const auto b = testing::BuildCorpus(name);
    const auto& s = b.stats;
    EXPECT_EQ(s.ksw, 2 * s.call_sites + s.headers + s.footers) << name;
    EXPECT_EQ(s.header_footer_bytes + s.prologue_epilogue_bytes + s.padding_bytes,
              s.instrumented_size - s.baseline_size)
        << name;
    if (s.call_sites > 0) {
      EXPECT_GT(s.instrumented_size, s.baseline_size) << name;
    }
    EXPECT_EQ(b.slot_kinds.size() * 4, b.code.size());
  }
}

TEST(Instrument, Deterministic) {
  const auto a = testing::BuildCorpus("indirect3");
  const auto b = testing::BuildCorpus("indirect3");
  EXPECT_EQ(a.code, b.code);
  EXPECT_EQ(a.key_domains, b.key_domains);
  SystemConfig other;
  other.seed = 5;
  EXPECT_NE(testing::BuildCorpus("indirect3", other).code, a.code);
}

TEST(Instrument, Rejections) {
  auto build = [](const std::string& src, bool default_indirect = false) {
    InstrumentConfig c;
    c.default_indirect = default_indirect;
    return Instrument(Assemble(src), c);
  };
  EXPECT_THROW(build(".func main\n KSW\n HLT\n.endfunc\n"), InstrumentError);
  EXPECT_THROW(build(".func main\n MOVI r13, 1\n HLT\n.endfunc\n"), InstrumentError);
  EXPECT_THROW(build(".func main\n ADD r1, r14\n HLT\n.endfunc\n"), InstrumentError);
  EXPECT_THROW(build(".func main entry\n CALL lib\n HLT\n.endfunc\n.func lib extern\n CALL p\n RET\n.endfunc\n"
                     ".func p\n RET\n.endfunc\n"),
               InstrumentError);
  const std::string unknown_callr = ".func main\n MOVI r1, 0\n CALLR r1\n HLT\n.endfunc\n";
  EXPECT_THROW(build(unknown_callr), InstrumentError);
  EXPECT_NO_THROW(build(unknown_callr, true));
}

TEST(Instrument, ReportListsCounters) {
  const std::string r = InstrumentationReport(testing::BuildCorpus("direct_calls"));
  EXPECT_NE(r.find("ksw = "), std::string::npos);
  EXPECT_NE(r.find("code_size_overhead_percent = "), std::string::npos);
}

}  // namespace
}  // namespace keyflow
