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

#include <cstring>
#include <set>

#include "keyflow/loader.h"
#include "testing.h"

namespace keyflow {
namespace {

using isa::Instruction;
using isa::Opcode;

void Put(std::vector<uint8_t>& code, const Instruction& i) {
  const auto e = isa::Encode(i);
  code.insert(code.end(), e.begin(), e.end());
}

// Block 0 under signature 3 switches to 4; block 1 under 4 prints r0 and halts.
InstrumentedBinary TwoDomainBinary() {
  InstrumentedBinary b;
  Put(b.code, {Opcode::kXori, isa::kSigReg, 0, 3 ^ 4});
  Put(b.code, {Opcode::kMovi, 0, 0, 42});
  Put(b.code, {Opcode::kNop});
  Put(b.code, {Opcode::kKsw});
  Put(b.code, {Opcode::kOut, 0});
  Put(b.code, {Opcode::kHlt});
  Put(b.code, {Opcode::kNop});
  Put(b.code, {Opcode::kNop});
  b.key_domains = {{0, 16, 3}, {16, 16, 4}};
  b.entry_signature = 3;
  b.instrumented = true;
  b.slot_kinds = "pone" "oonn";
  return b;
}

Block Plain(const InstrumentedBinary& b, uint32_t gla) {
  Block p{};
  std::memcpy(p.data(), b.code.data() + gla, 16);
  return p;
}

TEST(Loader, EachDomainReadsBackOnlyUnderItsOwnView) {
  const auto b = TwoDomainBinary();
  LoadReport rep;
  Machine m = Load(b, SystemConfig{}, &rep);
  EXPECT_EQ(m.ReadBlockThroughView(3, 0), Plain(b, 0));
  EXPECT_EQ(m.ReadBlockThroughView(4, 16), Plain(b, 16));
  EXPECT_NE(m.ReadBlockThroughView(4, 0), Plain(b, 0));
  EXPECT_NE(m.ReadBlockThroughView(3, 16), Plain(b, 16));
  EXPECT_NE(m.ReadBlockThroughView(2, 0), Plain(b, 0));
  EXPECT_EQ(rep.domains, 2u);
  EXPECT_EQ(rep.bytes_per_key.at(3), 16u);
  EXPECT_EQ(rep.bytes_per_key.at(4), 16u);
  EXPECT_EQ(rep.code_pages, 1u);
  EXPECT_EQ(rep.stack_pages, 4u);
}

TEST(Loader, InitialState) {
  Machine m = Load(TwoDomainBinary(), SystemConfig{});
  EXPECT_EQ(m.pc, 0);
  EXPECT_EQ(m.regs[isa::kSigReg], 3);
  EXPECT_EQ(m.regs[isa::kSpReg], 0xFFFE);
  EXPECT_EQ(m.mmu().active_view(), 3u);
  const Outcome o = m.Run(100);
  EXPECT_EQ(o.status, RunStatus::kHalted);
  EXPECT_EQ(o.output, std::vector<uint16_t>{42});
}

TEST(Loader, CorpusReadbackAndIsolation) {
  for (const auto& name : testing::CorpusNames()) {
    const auto b = testing::BuildCorpus(name);
    Machine m = Load(b, SystemConfig{});
    std::set<Signature> sigs;
    for (const auto& d : b.key_domains) sigs.insert(d.signature);
    for (const auto& d : b.key_domains) {
      for (uint32_t a = d.start; a < d.start + d.length; a += 16) {
        Block p{};
        if (a < b.code.size()) std::memcpy(p.data(), b.code.data() + a, std::min<size_t>(16, b.code.size() - a));
        ASSERT_EQ(m.ReadBlockThroughView(d.signature, static_cast<uint16_t>(a)), p) << name << " @" << a;
        for (Signature other : sigs) {
          if (other == d.signature) continue;
          EXPECT_NE(m.ReadBlockThroughView(other, static_cast<uint16_t>(a)), p) << name << " @" << a;
        }
      }
    }
  }
}

TEST(Loader, TrivialProgramHalts) {
  const auto b = Instrument(Assemble(".func main\n HLT\n.endfunc\n"), {});
  EXPECT_EQ(b.key_domains.size(), 1u);
  Machine m = Load(b, SystemConfig{});
  EXPECT_EQ(m.Run(10).status, RunStatus::kHalted);
}

TEST(Loader, RejectsBadDomainMaps) {
  const SystemConfig cfg;
  auto expect_reject = [&](auto mutate) {
    auto b = TwoDomainBinary();
    mutate(b);
    EXPECT_THROW(Load(b, cfg), LoadError);
  };
  expect_reject([](InstrumentedBinary& b) { b.key_domains = {{0, 16, 3}}; });
  expect_reject([](InstrumentedBinary& b) { b.key_domains = {{0, 16, 3}, {32, 16, 4}}; });
  expect_reject([](InstrumentedBinary& b) { b.key_domains = {{0, 32, 3}, {16, 16, 4}}; });
  expect_reject([](InstrumentedBinary& b) { b.key_domains = {{0, 8, 3}, {8, 24, 4}}; });
  expect_reject([](InstrumentedBinary& b) { b.key_domains[1].signature = 64; });
  expect_reject([](InstrumentedBinary& b) { b.key_domains[1].signature = 1; });
  expect_reject([](InstrumentedBinary& b) { b.entry_signature = 4; });
  expect_reject([](InstrumentedBinary& b) { b.data_size = 0x7C01; });
}

TEST(Loader, DataAndStackAreKeyZero) {
  const auto b = testing::BuildCorpus("memory");
  Machine m = Load(b, SystemConfig{});
  const auto& vt = m.mmu().views();
  const auto data_frame = m.mmu().maps().FrameOf(layout::kDataBase);
  const auto stack_frame = m.mmu().maps().FrameOf(0xFFFE);
  ASSERT_TRUE(data_frame && stack_frame);
  for (size_t v = 0; v < vt.size(); ++v) {
    EXPECT_EQ(vt.Entry(v, *data_frame).kid, 0);
    EXPECT_FALSE(vt.Entry(v, *data_frame).exec);
    EXPECT_EQ(vt.Entry(v, *stack_frame).kid, 0);
  }
}

}  // namespace
}  // namespace keyflow
