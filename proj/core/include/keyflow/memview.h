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

// Two-level translation with aliased second-level views. The first level maps
// guest-linear pages to guest-physical frames; each view maps guest-physical
// frames to the same host frames but may tag them with a different key id.
// Switching the active view therefore switches the decryption key.

#ifndef KEYFLOW_MEMVIEW_H_
#define KEYFLOW_MEMVIEW_H_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "keyflow/crypto.h"

namespace keyflow {

enum class TrapKind : uint8_t { kDecode, kTranslation, kViewIndex, kIntegrity, kStack };
std::string_view TrapKindName(TrapKind kind);

// Raised inside the machine and converted into a Trap.
class MachineFault : public std::runtime_error {
 public:
  MachineFault(TrapKind kind, const std::string& detail) : std::runtime_error(detail), kind_(kind) {}
  TrapKind kind() const { return kind_; }

 private:
  TrapKind kind_;
};

enum class Access : uint8_t { kFetch, kLoad, kStore };
enum class ExecMode : uint8_t { kAliasing, kKeyReg };
std::string_view ExecModeName(ExecMode mode);
std::optional<ExecMode> ParseExecMode(std::string_view name);

inline constexpr size_t kMaxViews = 512;
inline constexpr size_t kReservedViews = 3;  // hypervisor, kernel, default user
inline constexpr size_t kDefaultUserView = 2;

// Second-level entry, packed as stored in memory:
//   bits 0-23 host frame, 24-38 key id, 62 executable, 63 present.
struct EptEntry {
  uint32_t frame = 0;
  KeyId kid = 0;
  bool exec = false;
  bool present = false;

  uint64_t Pack() const;
  static EptEntry Unpack(uint64_t raw);
  friend bool operator==(const EptEntry&, const EptEntry&) = default;
};
inline constexpr int kEptKeyIdShift = 24;
inline constexpr int kEptKeyIdBits = 15;

struct AddressMaps {
  static constexpr uint32_t kGpaBase = 0x10;
  static constexpr uint32_t kHpaBase = 0x100;

  uint32_t page_size = 256;
  std::vector<std::optional<uint32_t>> page_table;  // GLA page -> GPA frame

  explicit AddressMaps(uint32_t page_size = 256);
  uint32_t PageOf(uint32_t gla) const { return gla / page_size; }
  std::optional<uint32_t> FrameOf(uint32_t gla) const;
  // Maps the next free GPA frame at GLA page `page`; returns the frame.
  uint32_t MapPage(uint32_t page);
  uint32_t mapped_frames() const { return next_frame_ - kGpaBase; }

 private:
  uint32_t next_frame_ = kGpaBase;
};

class ViewTable {
 public:
  // 3 reserved views plus `num_prot` protected ones, all key 0. Protected view
  // i is later keyed with KeyOfView(i): i itself when the key-id space can
  // hold every view index, else a seeded random id in [1, capacity).
  static ViewTable Init(uint32_t num_prot, uint32_t key_capacity = 64, uint64_t seed = 1);

  size_t size() const { return key_of_view_.size(); }
  KeyId KeyOfView(size_t view) const { return key_of_view_.at(view); }

  // Adds frame `gpa_frame` (must be the next consecutive one) to every view
  // with key 0.
  void MapFrame(uint32_t gpa_frame, uint32_t hpa_frame, bool exec);

  // Tags code frames with each protected view's key id. Throws on an
  // unmapped or non-executable frame.
  void RegisterProgram(const std::vector<uint32_t>& code_frames);
  // Resets every key id to 0.
  void DeregisterProgram();

  EptEntry Entry(size_t view, uint32_t gpa_frame) const;
  uint64_t RawEntry(size_t view, uint32_t gpa_frame) const;
  void SetRawEntry(size_t view, uint32_t gpa_frame, uint64_t raw);
  bool HasFrame(uint32_t gpa_frame) const;
  uint32_t frame_count() const { return entries_.empty() ? 0 : static_cast<uint32_t>(entries_[0].size()); }

 private:
  std::vector<KeyId> key_of_view_;
  std::vector<std::vector<uint64_t>> entries_;  // [view][frame - kGpaBase]
};

// Fully associative LRU tag store; a counter model, translations themselves
// are always read from the view table.
class Tlb {
 public:
  explicit Tlb(size_t capacity = 16) : capacity_(capacity) {}

  // True on hit. A miss installs the tag, evicting the least recently used.
  bool Access(uint64_t tag);
  void Flush() { entries_.clear(); }
  size_t capacity() const { return capacity_; }
  uint64_t misses() const { return misses_; }
  uint64_t hits() const { return hits_; }

 private:
  struct Slot {
    uint64_t tag;
    uint64_t last_use;
  };
  size_t capacity_;
  std::vector<Slot> entries_;
  uint64_t clock_ = 0;
  uint64_t misses_ = 0;
  uint64_t hits_ = 0;
};

struct Translation {
  uint32_t hpa = 0;
  KeyId kid = 0;
};

struct MmuCounters {
  uint64_t itlb_misses = 0;
  uint64_t dtlb_load_misses = 0;
  uint64_t dtlb_store_misses = 0;
  uint64_t view_switches = 0;
  uint64_t tlb_misses() const { return itlb_misses + dtlb_load_misses + dtlb_store_misses; }
};

class Mmu {
 public:
  Mmu(AddressMaps maps, ViewTable views, ExecMode mode, size_t itlb_entries = 16, size_t dtlb_entries = 16);

  // TLB-counted walk under the active view (aliasing) or key register
  // (keyreg). Throws MachineFault(kTranslation).
  Translation Translate(uint16_t gla, Access access);
  // Uncounted walk under an explicit view; used by the loader.
  Translation Walk(size_t view, uint16_t gla, Access access) const;

  // KSW: selects view `sig` (aliasing) or loads the key register (keyreg).
  // Throws MachineFault(kViewIndex) when sig is not a view index.
  void KeySwitch(uint16_t sig);

  // Initial activation by the loader; not counted as a switch.
  void Activate(uint16_t sig);

  // XORs the key id of the next fetch translation only.
  void ArmOneShotKeyFlip(KeyId mask) { one_shot_flip_ = mask; }

  ExecMode mode() const { return mode_; }
  size_t active_view() const { return active_view_; }
  uint16_t key_register() const { return key_register_; }
  const MmuCounters& counters() const { return counters_; }
  ViewTable& views() { return views_; }
  const ViewTable& views() const { return views_; }
  const AddressMaps& maps() const { return maps_; }

 private:
  AddressMaps maps_;
  ViewTable views_;
  ExecMode mode_;
  Tlb itlb_;
  Tlb dtlb_;
  size_t active_view_ = kDefaultUserView;
  uint16_t key_register_ = 0;
  std::optional<KeyId> one_shot_flip_;
  MmuCounters counters_;
};

// Host physical memory: ciphertext at rest plus optional per-block tags.
class HostMemory {
 public:
  HostMemory() = default;
  HostMemory(uint32_t base, uint32_t size) : base_(base), bytes_(size), tags_(size / kCipherBlockSize) {}

  bool Contains(uint32_t hpa, uint32_t len = 1) const {
    return hpa >= base_ && hpa - base_ + len <= bytes_.size();
  }
  Block ReadBlock(uint32_t block_hpa) const;
  void WriteBlock(uint32_t block_hpa, const Block& block);
  uint64_t tag(uint32_t block_hpa) const { return tags_[(block_hpa - base_) / kCipherBlockSize]; }
  void set_tag(uint32_t block_hpa, uint64_t t) { tags_[(block_hpa - base_) / kCipherBlockSize] = t; }
  void FlipBit(uint32_t hpa, int bit) { bytes_.at(hpa - base_) ^= static_cast<uint8_t>(1u << bit); }
  uint32_t base() const { return base_; }
  uint32_t size() const { return static_cast<uint32_t>(bytes_.size()); }

 private:
  uint32_t base_ = 0;
  std::vector<uint8_t> bytes_;
  std::vector<uint64_t> tags_;
};

}  // namespace keyflow

#endif  // KEYFLOW_MEMVIEW_H_
