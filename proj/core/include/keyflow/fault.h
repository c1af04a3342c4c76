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

// Single-fault injection and campaigns. A trial copies the loaded machine,
// runs it to the trigger (instructions committed == t), injects one fault and
// runs to completion; the outcome is classified against the golden run.

#ifndef KEYFLOW_FAULT_H_
#define KEYFLOW_FAULT_H_

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "keyflow/instrument.h"
#include "keyflow/machine.h"

namespace keyflow {

class FaultError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FaultKind : uint8_t { kPcBitflip, kCodeBitflip, kRegBitflip, kCallTargetBitflip, kEpteKeyIdFlip, kSkipInstr };
std::string_view FaultKindName(FaultKind k);
// Accepts "pc", "code", "reg", "calltarget", "epte", "skip".
std::optional<FaultKind> ParseFaultKind(std::string_view name);

struct FaultSpec {
  FaultKind kind = FaultKind::kPcBitflip;
  uint64_t trigger = 0;  // inject when this many instructions have committed
  uint16_t gla = 0;      // CODE: byte address; CALLTARGET/SKIP: pc of the target instruction
  uint8_t reg = 0;       // REG
  uint16_t view = 0;     // EPTE
  uint32_t frame = 0;    // EPTE: guest-physical frame
  uint8_t bit = 0;
  bool transient = false;  // REG: one read only
  bool one_shot = false;   // EPTE: next fetch only

  // Throws FaultError when a field is outside its width.
  void Validate() const;
  std::string Location() const;
};

enum class FaultClass : uint8_t {
  kDetectedDecode,
  kDetectedTranslation,
  kDetectedViewIndex,
  kDetectedIntegrity,
  kDetectedStack,
  kSilentCorruption,
  kBenign,
  kTimeout,
};
inline constexpr int kFaultClassCount = 8;
std::string_view FaultClassName(FaultClass c);
bool IsDetected(FaultClass c);

struct FaultModel {
  FaultKind kind = FaultKind::kPcBitflip;
  // CALLTARGET: keep only flips whose target leaves the intended key domain.
  bool cross_domain = false;
  bool transient = false;  // REG
  bool one_shot = false;   // EPTE
};

struct TraceEntry {
  uint16_t pc = 0;
  isa::Opcode op = isa::Opcode::kNop;
  uint16_t next_pc = 0;
  char slot_kind = 'o';
};

struct GoldenRun {
  Outcome outcome;
  std::vector<TraceEntry> trace;
};

// Fault-free reference run of a copy of `loaded`.
GoldenRun RecordGolden(const Machine& loaded, const InstrumentedBinary& binary, uint64_t max_steps = 1000000);

// Applies `f` to a machine paused at the trigger. With encrypted_ept an
// EPTE flip lands on the ciphertext of the stored entry and garbles all of it.
void Inject(Machine& m, const FaultSpec& f, bool encrypted_ept = false);

// Uniform sampling over (trigger, location, bit) for the model's kind.
// SKIP targets original instructions only and is enumerated exactly when
// n == 0 or n covers the space. Throws FaultError on an empty space.
std::vector<FaultSpec> EnumerateOrSample(const Machine& loaded, const InstrumentedBinary& binary,
                                         const GoldenRun& golden, const FaultModel& model, size_t n, uint64_t seed);

// Maps SKIP / CALLTARGET specs onto another build of the same program by the
// ordinal of the targeted original instruction in the dynamic trace.
std::vector<FaultSpec> RetargetSpecs(const std::vector<FaultSpec>& specs, const GoldenRun& from, const GoldenRun& to);

FaultClass Classify(const Outcome& golden, const Outcome& faulted);

struct TrialResult {
  FaultSpec spec;
  FaultClass cls = FaultClass::kBenign;
  std::optional<uint64_t> latency;
  RunStatus status = RunStatus::kHalted;
  Counters counters;
};

struct CampaignOptions {
  unsigned jobs = 1;
  bool encrypted_ept = false;
  uint64_t max_steps = 0;  // 0: 4 * golden length + 1000
};

struct CampaignReport {
  std::string model;
  uint64_t seed = 0;
  std::string mode;
  uint64_t golden_length = 0;
  std::vector<TrialResult> trials;
  std::map<FaultClass, uint64_t> counts;
  std::map<uint64_t, uint64_t> latency_histogram;
  Counters aggregate;  // summed over trials

  uint64_t n() const { return trials.size(); }
  uint64_t detected() const;
  double detection_rate() const;
  double rate(FaultClass c) const;
  // Fraction of detected trials with latency >= k.
  double latency_at_least(uint64_t k) const;
  // Fraction of all trials detected with latency >= k.
  double latency_tail(uint64_t k) const;

  std::string ToJson() const;
  std::string ToCsv() const;
  std::string Summary() const;
};

// Runs one trial per spec on fresh copies of `loaded`; results are stored in
// spec order whatever the parallelism, so reports are byte-identical.
CampaignReport RunCampaignWithSpecs(const Machine& loaded, const GoldenRun& golden, const std::vector<FaultSpec>& specs,
                                    const CampaignOptions& options = {});

CampaignReport RunCampaign(const Machine& loaded, const InstrumentedBinary& binary, const FaultModel& model, size_t n,
                           uint64_t seed, const CampaignOptions& options = {});

// Scripted attack: the first RET that pops `from_return` jumps to
// `to_return` instead.
Outcome RunReturnRedirect(const Machine& loaded, uint16_t from_return, uint16_t to_return, uint64_t max_steps);

}  // namespace keyflow

#endif  // KEYFLOW_FAULT_H_
