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

// Fetch-decrypt-decode-execute engine. Every fetch translates the PC through
// the active view, decrypts the 16-byte block under the resulting key id and
// decodes the addressed slot; there is no plaintext code cache.

#ifndef KEYFLOW_MACHINE_H_
#define KEYFLOW_MACHINE_H_

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "keyflow/crypto.h"
#include "keyflow/isa.h"
#include "keyflow/memview.h"

namespace keyflow {

struct Counters {
  uint64_t committed = 0;
  uint64_t ksw = 0;
  uint64_t calls = 0;
  uint64_t rets = 0;
  uint64_t view_switches = 0;
  uint64_t itlb_misses = 0;
  uint64_t dtlb_load_misses = 0;
  uint64_t dtlb_store_misses = 0;
  uint64_t tlb_misses() const { return itlb_misses + dtlb_load_misses + dtlb_store_misses; }
};

struct Trap {
  TrapKind kind = TrapKind::kDecode;
  uint16_t pc = 0;
  uint64_t committed = 0;  // instructions committed before the trap
  std::string detail;
};

enum class RunStatus : uint8_t { kHalted, kTrapped, kTimeout };
std::string_view RunStatusName(RunStatus s);

struct Outcome {
  RunStatus status = RunStatus::kTimeout;
  std::vector<uint16_t> output;
  std::array<uint16_t, isa::kNumRegisters> regs{};
  uint16_t pc = 0;
  Counters counters;
  std::optional<Trap> trap;
  std::optional<uint64_t> activation;  // committed count at fault activation

  std::string ToJson() const;
};

struct StepEvent {
  uint64_t index = 0;  // position in the dynamic trace
  uint16_t pc = 0;
  isa::Instruction instruction;
  uint16_t next_pc = 0;
};

struct MachineOptions {
  bool integrity = false;
  uint32_t stack_base = 0xFC00;  // lowest stack byte; the stack ends at 0xFFFF
};

class Machine {
 public:
  using Observer = std::function<void(const Machine&, const StepEvent&)>;

  Machine(Mmu mmu, HostMemory memory, CryptoEngine engine, MachineOptions options);

  // One instruction. Returns the trap if this step trapped.
  std::optional<Trap> Step();
  // Steps until HLT, a trap, or `max_steps` further steps.
  Outcome Run(uint64_t max_steps);
  Outcome Snapshot() const;

  bool done() const { return halted_ || trap_.has_value(); }
  bool halted() const { return halted_; }
  const std::optional<Trap>& trap() const { return trap_; }
  uint64_t committed() const { return counters_.committed; }
  Counters counters() const;
  const std::vector<uint16_t>& output() const { return output_; }

  std::array<uint16_t, isa::kNumRegisters> regs{};
  uint16_t pc = 0;

  void set_observer(Observer o) { observer_ = std::move(o); }

  // Loader-side plaintext access through an explicit view (uncounted).
  void WriteBlockThroughView(size_t view, uint16_t gla, const Block& plaintext);
  Block ReadBlockThroughView(size_t view, uint16_t gla);

  // Fault hooks. Activation time is recorded per hook; see activation().
  void FlipPcBit(int bit);
  void FlipRegisterBit(uint8_t reg, int bit, bool transient);
  void ArmCallTargetFlip(uint16_t mask) { call_flip_ = mask; }
  // Flips one ciphertext bit of the code byte at `gla`.
  void FlipCodeBit(uint16_t gla, int bit);
  void SkipInstruction();
  // The next RET that pops `from` jumps to `to` instead.
  void ArmReturnRedirect(uint16_t from, uint16_t to) { redirect_ = {from, to}; }
  void MarkActivation() { activation_ = counters_.committed; }
  const std::optional<uint64_t>& activation() const { return activation_; }

  Mmu& mmu() { return mmu_; }
  const Mmu& mmu() const { return mmu_; }
  HostMemory& memory() { return memory_; }
  CryptoEngine& engine() { return engine_; }
  const MachineOptions& options() const { return options_; }

 private:
  isa::Instruction Fetch();
  void Execute(const isa::Instruction& i);
  void CheckKeyId(KeyId kid) const;
  Block LoadBlock(uint32_t block_hpa, KeyId kid);
  void StoreBlock(uint32_t block_hpa, KeyId kid, const Block& plain);
  uint8_t LoadByte(const Translation& t);
  uint16_t LoadWord(uint16_t gla);
  void StoreWord(uint16_t gla, uint16_t value);
  void Push(uint16_t value);
  uint16_t Pop();
  uint16_t Read(uint8_t reg);
  void Write(uint8_t reg, uint16_t value);

  Mmu mmu_;
  HostMemory memory_;
  CryptoEngine engine_;
  MachineOptions options_;
  Counters counters_;
  std::vector<uint16_t> output_;
  bool halted_ = false;
  std::optional<Trap> trap_;
  Observer observer_;

  std::optional<uint16_t> call_flip_;
  std::optional<std::pair<uint8_t, uint16_t>> transient_flip_;
  std::optional<uint32_t> watch_block_;
  std::optional<std::pair<uint16_t, uint16_t>> redirect_;
  std::optional<uint64_t> activation_;
};

}  // namespace keyflow

#endif  // KEYFLOW_MACHINE_H_
