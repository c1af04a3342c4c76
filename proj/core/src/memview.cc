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

#include "keyflow/memview.h"

#include <algorithm>
#include <cstring>
#include <sstream>

#include "keyflow/rng.h"

namespace keyflow {

namespace {

std::string Hex(uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

constexpr uint64_t kFrameMask = (uint64_t{1} << 24) - 1;
constexpr uint64_t kKidMask = (uint64_t{1} << kEptKeyIdBits) - 1;
constexpr uint64_t kExecBit = uint64_t{1} << 62;
constexpr uint64_t kPresentBit = uint64_t{1} << 63;

}  // namespace

std::string_view TrapKindName(TrapKind kind) {
  switch (kind) {
    case TrapKind::kDecode: return "DecodeFault";
    case TrapKind::kTranslation: return "TranslationFault";
    case TrapKind::kViewIndex: return "ViewIndexFault";
    case TrapKind::kIntegrity: return "IntegrityFault";
    case TrapKind::kStack: return "StackFault";
  }
  return "?";
}

std::string_view ExecModeName(ExecMode mode) { return mode == ExecMode::kAliasing ? "aliasing" : "keyreg"; }

std::optional<ExecMode> ParseExecMode(std::string_view name) {
  if (name == "aliasing") return ExecMode::kAliasing;
  if (name == "keyreg") return ExecMode::kKeyReg;
  return std::nullopt;
}

uint64_t EptEntry::Pack() const {
  return (frame & kFrameMask) | ((kid & kKidMask) << kEptKeyIdShift) | (exec ? kExecBit : 0) |
         (present ? kPresentBit : 0);
}

EptEntry EptEntry::Unpack(uint64_t raw) {
  EptEntry e;
  e.frame = static_cast<uint32_t>(raw & kFrameMask);
  e.kid = static_cast<KeyId>((raw >> kEptKeyIdShift) & kKidMask);
  e.exec = raw & kExecBit;
  e.present = raw & kPresentBit;
  return e;
}

AddressMaps::AddressMaps(uint32_t page_size) : page_size(page_size) {
  if (page_size < kCipherBlockSize || page_size > 0x10000 || (page_size & (page_size - 1))) {
    throw std::invalid_argument("page size must be a power of two in [16, 65536]");
  }
  page_table.resize(0x10000 / page_size);
}

std::optional<uint32_t> AddressMaps::FrameOf(uint32_t gla) const {
  const uint32_t page = PageOf(gla);
  return page < page_table.size() ? page_table[page] : std::nullopt;
}

uint32_t AddressMaps::MapPage(uint32_t page) {
  if (page >= page_table.size()) throw std::out_of_range("page outside the address space");
  if (page_table[page]) throw std::invalid_argument("page " + std::to_string(page) + " mapped twice");
  page_table[page] = next_frame_;
  return next_frame_++;
}

ViewTable ViewTable::Init(uint32_t num_prot, uint32_t key_capacity, uint64_t seed) {
  const size_t total = kReservedViews + num_prot;
  if (total > kMaxViews) {
    throw std::invalid_argument("3 + NUM_PROT_EPTS = " + std::to_string(total) + " exceeds the 512-view limit");
  }
  if (key_capacity < 2 || key_capacity > kMaxKeyIdCapacity) {
    throw std::invalid_argument("key id capacity must be in [2, 32768]");
  }
  ViewTable vt;
  vt.key_of_view_.assign(total, 0);
  vt.entries_.resize(total);
  Rng rng(seed);
  for (size_t v = kReservedViews; v < total; ++v) {
    vt.key_of_view_[v] = key_capacity > total - 1 ? static_cast<KeyId>(v)
                                                  : static_cast<KeyId>(rng.Between(1, key_capacity - 1));
  }
  return vt;
}

void ViewTable::MapFrame(uint32_t gpa_frame, uint32_t hpa_frame, bool exec) {
  if (gpa_frame != AddressMaps::kGpaBase + frame_count()) {
    throw std::invalid_argument("guest frames must be mapped consecutively");
  }
  const uint64_t raw = EptEntry{hpa_frame, 0, exec, true}.Pack();
  for (auto& view : entries_) view.push_back(raw);
}

bool ViewTable::HasFrame(uint32_t gpa_frame) const {
  return gpa_frame >= AddressMaps::kGpaBase && gpa_frame - AddressMaps::kGpaBase < frame_count();
}

void ViewTable::RegisterProgram(const std::vector<uint32_t>& code_frames) {
  for (uint32_t f : code_frames) {
    if (!HasFrame(f)) throw std::invalid_argument("frame " + Hex(f) + " is not mapped");
    if (!Entry(kDefaultUserView, f).exec) throw std::invalid_argument("frame " + Hex(f) + " is a data frame");
  }
  for (uint32_t f : code_frames) {
    for (size_t v = kReservedViews; v < size(); ++v) {
      EptEntry e = Entry(v, f);
      e.kid = key_of_view_[v];
      SetRawEntry(v, f, e.Pack());
    }
  }
}

void ViewTable::DeregisterProgram() {
  for (auto& view : entries_) {
    for (auto& raw : view) {
      EptEntry e = EptEntry::Unpack(raw);
      e.kid = 0;
      raw = e.Pack();
    }
  }
}

EptEntry ViewTable::Entry(size_t view, uint32_t gpa_frame) const { return EptEntry::Unpack(RawEntry(view, gpa_frame)); }

uint64_t ViewTable::RawEntry(size_t view, uint32_t gpa_frame) const {
  if (view >= size() || !HasFrame(gpa_frame)) return 0;
  return entries_[view][gpa_frame - AddressMaps::kGpaBase];
}

void ViewTable::SetRawEntry(size_t view, uint32_t gpa_frame, uint64_t raw) {
  if (view >= size() || !HasFrame(gpa_frame)) throw std::out_of_range("no such view entry");
  entries_[view][gpa_frame - AddressMaps::kGpaBase] = raw;
}

bool Tlb::Access(uint64_t tag) {
  ++clock_;
  for (auto& slot : entries_) {
    if (slot.tag == tag) {
      slot.last_use = clock_;
      ++hits_;
      return true;
    }
  }
  ++misses_;
  if (capacity_ == 0) return false;
  if (entries_.size() < capacity_) {
    entries_.push_back({tag, clock_});
  } else {
    auto victim = std::min_element(entries_.begin(), entries_.end(),
                                   [](const Slot& a, const Slot& b) { return a.last_use < b.last_use; });
    *victim = {tag, clock_};
  }
  return false;
}

Mmu::Mmu(AddressMaps maps, ViewTable views, ExecMode mode, size_t itlb_entries, size_t dtlb_entries)
    : maps_(std::move(maps)), views_(std::move(views)), mode_(mode), itlb_(itlb_entries), dtlb_(dtlb_entries) {}

Translation Mmu::Walk(size_t view, uint16_t gla, Access access) const {
  const auto frame = maps_.FrameOf(gla);
  if (!frame) throw MachineFault(TrapKind::kTranslation, "unmapped guest-linear address " + Hex(gla));
  const EptEntry e = views_.Entry(view, *frame);
  if (!e.present) throw MachineFault(TrapKind::kTranslation, "non-present view entry for " + Hex(gla));
  if (access == Access::kFetch && !e.exec) {
    throw MachineFault(TrapKind::kTranslation, "instruction fetch from non-executable page " + Hex(gla));
  }
  if (access == Access::kStore && e.exec) {
    throw MachineFault(TrapKind::kTranslation, "store to code page " + Hex(gla));
  }
  return {e.frame * maps_.page_size + gla % maps_.page_size, e.kid};
}

Translation Mmu::Translate(uint16_t gla, Access access) {
  const uint64_t page = maps_.PageOf(gla);
  const uint64_t tag = mode_ == ExecMode::kAliasing ? (uint64_t{active_view_} << 32 | page) : page;
  Tlb& tlb = access == Access::kFetch ? itlb_ : dtlb_;
  if (!tlb.Access(tag)) {
    switch (access) {
      case Access::kFetch: ++counters_.itlb_misses; break;
      case Access::kLoad: ++counters_.dtlb_load_misses; break;
      case Access::kStore: ++counters_.dtlb_store_misses; break;
    }
  }
  Translation t = Walk(active_view_, gla, access);
  if (access == Access::kFetch) {
    if (mode_ == ExecMode::kKeyReg) t.kid = views_.KeyOfView(key_register_);
    if (one_shot_flip_) {
      t.kid ^= *one_shot_flip_;
      one_shot_flip_.reset();
    }
  }
  return t;
}

void Mmu::KeySwitch(uint16_t sig) {
  if (sig >= views_.size()) {
    throw MachineFault(TrapKind::kViewIndex,
                       "key switch to index " + std::to_string(sig) + " with " + std::to_string(views_.size()) + " views");
  }
  if (mode_ == ExecMode::kAliasing) {
    active_view_ = sig;
    ++counters_.view_switches;
  } else {
    key_register_ = sig;
  }
}

void Mmu::Activate(uint16_t sig) {
  if (sig >= views_.size()) throw std::invalid_argument("entry signature is not a view index");
  if (mode_ == ExecMode::kAliasing) {
    active_view_ = sig;
  } else {
    active_view_ = kDefaultUserView;
    key_register_ = sig;
  }
}

Block HostMemory::ReadBlock(uint32_t block_hpa) const {
  Block b;
  std::memcpy(b.data(), bytes_.data() + (block_hpa - base_), kCipherBlockSize);
  return b;
}

void HostMemory::WriteBlock(uint32_t block_hpa, const Block& block) {
  std::memcpy(bytes_.data() + (block_hpa - base_), block.data(), kCipherBlockSize);
}

}  // namespace keyflow
