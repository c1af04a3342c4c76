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

// The instrumentation pipeline. A protected program is laid out as segments,
// each starting on an encryption-block boundary:
//
//   header (per incoming call site or indirect class), domain S_h
//     XORI SIG, S_h^S_F ; MOVI RC, S_F^S_h ; NOP* ; KSW
//     CALL body ; XOR SIG, RC ; NOP* ; KSW            <- domain S_F
//     RET ; NOP*                                        <- domain S_h
//   body, domain S_F
//     every call:  [RC spill] XORI SIG, C ; NOP* ; KSW | CALL ; XORI SIG, C ;
//                  NOP* ; KSW | [RC restore]
//
// The footer (XOR SIG, RC ; KSW) sits in the header behind a CALL into the
// body, so the RET that leaves the function executes in the header's key
// domain no matter how many headers a function has.

#ifndef KEYFLOW_INSTRUMENT_H_
#define KEYFLOW_INSTRUMENT_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "keyflow/program.h"
#include "keyflow/signatures.h"

namespace keyflow {

enum class SlotKind : char {
  kOriginal = 'o',
  kEntryInit = 'e',
  kPrologue = 'p',
  kEpilogue = 'q',
  kHeader = 'h',
  kFooter = 'f',
  kPadding = 'n',
};

struct InstrumentConfig {
  SignatureRange range;
  uint32_t block_size = 16;
  bool instrument = true;
  bool headers = true;
  // CALLR without a .targets set: switch to the default user view (the
  // prototype's fallback when no points-to information exists) instead of
  // rejecting the program.
  bool default_indirect = false;
  uint64_t seed = 1;
};

struct KeyDomain {
  uint16_t start = 0;
  uint32_t length = 0;
  Signature signature = 0;
  friend bool operator==(const KeyDomain&, const KeyDomain&) = default;
};

enum class CallKind : uint8_t { kDirect, kIndirect, kExternal };

struct CallSiteInfo {
  uint16_t call_gla = 0;
  uint16_t return_gla = 0;
  CallKind kind = CallKind::kDirect;
  std::string caller;
  std::string callee;  // empty for indirect sites
  Signature caller_signature = 0;
  Signature target_signature = 0;
};

struct HeaderInfo {
  std::string function;
  uint16_t start = 0;
  Signature signature = 0;
  bool indirect = false;
};

struct FunctionInfo {
  std::string name;
  uint16_t start = 0;
  uint16_t body_start = 0;
  uint32_t size = 0;
  Signature signature = 0;
  bool external = false;
};

// Static counters; the three overhead parts sum to
// instrumented_size - baseline_size.
struct InstrumentStats {
  uint32_t ksw = 0;
  uint32_t call_sites = 0;
  uint32_t headers = 0;
  uint32_t footers = 0;
  uint32_t baseline_size = 0;
  uint32_t instrumented_size = 0;
  uint32_t header_footer_bytes = 0;
  uint32_t prologue_epilogue_bytes = 0;
  uint32_t padding_bytes = 0;

  double overhead_percent() const {
    return baseline_size ? 100.0 * (instrumented_size - baseline_size) / baseline_size : 0.0;
  }
};

struct InstrumentedBinary {
  std::vector<uint8_t> code;
  uint16_t code_base = layout::kCodeBase;
  std::vector<KeyDomain> key_domains;
  uint16_t entry_gla = 0;
  Signature entry_signature = kDefaultUserSignature;
  uint32_t block_size = 16;
  uint32_t data_size = 0;
  bool instrumented = false;
  bool headers = false;
  std::string slot_kinds;  // one SlotKind char per 4-byte slot
  std::vector<FunctionInfo> functions;
  std::vector<HeaderInfo> header_table;
  std::vector<CallSiteInfo> call_sites;
  InstrumentStats stats;

  // Domain signature of the block holding `gla`, if inside code.
  std::optional<Signature> DomainAt(uint32_t gla) const;
  SlotKind KindAt(uint32_t gla) const;
  const FunctionInfo* FunctionAt(uint32_t gla) const;
};

// --- Pass building blocks -------------------------------------------------

// Symbolic reference resolved once the layout is fixed.
struct CodeRef {
  enum class Kind : uint8_t {
    kNone,
    kLabel,           // user label
    kData,            // DATA base
    kBody,            // start of a function body segment
    kDirectHeader,    // header for one direct call site
    kIndirectHeader,  // a function's indirect-class header
    kFunctionStart,   // first byte of a function (extern / baseline)
    kFunctionValue,   // address a `MOVI rX, f` should yield
  };
  Kind kind = Kind::kNone;
  std::string name;
  CallSiteId site;
  int32_t addend = 0;
};

struct CodeItem {
  isa::Instruction instruction;
  SlotKind kind = SlotKind::kOriginal;
  CodeRef ref;
  std::vector<std::string> labels;
};

enum class SegmentKind : uint8_t { kHeader, kBody, kExternal };

struct Segment {
  SegmentKind kind = SegmentKind::kBody;
  std::string function;
  Signature signature = 0;  // SIG and active view on entry
  bool indirect = false;    // header segments: serves an indirect class
  CallSiteId site;          // header segments: the direct call site
  std::vector<CodeItem> items;
};

// Call prologue and epilogue around `call`, switching from `caller` to
// `target` and back. With `spill_rc`, RC is saved on the stack before and
// reloaded after, using only reserved registers.
std::vector<CodeItem> InstrumentCallSite(const CodeItem& call, Signature caller, Signature target,
                                         bool spill_rc);

// Header switching from `header` to `body` and back around a CALL into the
// body segment of `function`.
std::vector<CodeItem> SynthesizeHeader(const std::string& function, Signature header, Signature body);

// XOR SIG, RC ; KSW
std::vector<CodeItem> SynthesizeFooter();

struct Layout {
  std::vector<uint8_t> code;
  std::string slot_kinds;
  std::vector<uint16_t> segment_starts;
  std::vector<uint32_t> segment_ends;
  std::map<std::string, uint16_t> labels;
  std::map<std::string, uint16_t> bodies;
  std::map<std::string, uint16_t> function_starts;
  std::map<CallSiteId, uint16_t> direct_headers;
  std::map<std::string, uint16_t> indirect_headers;
  std::vector<KeyDomain> key_domains;
};

// Places segments on block boundaries, pads every KSW into the last slot of
// its block, resolves references and derives the key-domain map by static
// key-flow analysis. Throws InstrumentError on inconsistent key flow.
Layout AlignAndMap(const std::vector<Segment>& segments, uint32_t block_size, uint16_t code_base,
                   size_t entry_segment);

// Static key-flow analysis over encoded code. Seeds: each segment start with
// (SIG, view) = its signature. Returns, per block, the view under which the
// block is fetched.
struct KeyFlowSeed {
  uint16_t gla = 0;
  uint32_t end = 0;  // segment end (exclusive)
  Signature signature = 0;
};
std::vector<Signature> AnalyzeKeyFlow(const std::vector<uint8_t>& code, uint16_t code_base,
                                      uint32_t block_size, const std::vector<KeyFlowSeed>& seeds);

// Full pipeline. With cfg.instrument == false the result is the baseline
// image in a single default-key domain.
InstrumentedBinary Instrument(const Program& program, const InstrumentConfig& cfg);

// Human-readable report (key = value lines).
std::string InstrumentationReport(const InstrumentedBinary& binary);

}  // namespace keyflow

#endif  // KEYFLOW_INSTRUMENT_H_
