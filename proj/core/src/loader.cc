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

#include "keyflow/loader.h"

#include <algorithm>
#include <cstring>
#include <sstream>

namespace keyflow {

namespace {

uint32_t RoundUp(uint32_t v, uint32_t m) { return (v + m - 1) / m * m; }

}  // namespace

std::string LoadReport::ToText() const {
  std::ostringstream os;
  os << "key_domains = " << domains << '\n'
     << "code_pages = " << code_pages << '\n'
     << "data_pages = " << data_pages << '\n'
     << "stack_pages = " << stack_pages << '\n';
  for (const auto& [kid, bytes] : bytes_per_key) os << "encrypted_bytes[kid " << kid << "] = " << bytes << '\n';
  return os.str();
}

void ValidateDomains(const InstrumentedBinary& b, size_t view_count) {
  const uint32_t bs = b.block_size;
  if (bs == 0 || bs % kCipherBlockSize) throw LoadError("block size must be a multiple of 16");
  if (b.code.empty()) throw LoadError("empty code image");
  if (b.code.size() % isa::kInstructionSize) throw LoadError("code size is not a multiple of 4");
  const uint32_t end = b.code_base + RoundUp(static_cast<uint32_t>(b.code.size()), bs);
  if (end > layout::kCodeLimit) throw LoadError("code does not fit below the data region");
  if (b.key_domains.empty()) throw LoadError("no key domains");
  std::vector<KeyDomain> ds = b.key_domains;
  std::sort(ds.begin(), ds.end(), [](const KeyDomain& x, const KeyDomain& y) { return x.start < y.start; });
  uint32_t cursor = b.code_base;
  for (const auto& d : ds) {
    if (d.start % bs || d.length % bs || d.length == 0) {
      throw LoadError("key domain at " + std::to_string(d.start) + " is not block-aligned");
    }
    if (d.start < cursor) throw LoadError("overlapping key domains at " + std::to_string(d.start));
    if (d.start > cursor) throw LoadError("key domains leave a gap at " + std::to_string(cursor));
    if (d.signature < kDefaultUserSignature || d.signature >= view_count) {
      throw LoadError("domain signature " + std::to_string(d.signature) + " outside the protected view range");
    }
    cursor = d.start + d.length;
  }
  if (cursor != end) throw LoadError("key domains do not cover the code exactly");
  auto dom = b.DomainAt(b.entry_gla);
  if (!dom || *dom != b.entry_signature) throw LoadError("entry signature does not match the entry's key domain");
}

Machine Load(const InstrumentedBinary& b, const SystemConfig& cfg, LoadReport* report) {
  cfg.Validate();
  if (b.block_size % kCipherBlockSize || cfg.page_size % b.block_size) {
    throw LoadError("page size must be a multiple of the binary's block size");
  }
  ValidateDomains(b, cfg.view_count());

  const uint32_t page = cfg.page_size;
  const uint32_t stack_base = 0x10000 - cfg.stack_size;
  const uint32_t data_end = layout::kDataBase + b.data_size;
  if (data_end > stack_base) throw LoadError("data region overlaps the stack");

  AddressMaps maps(page);
  ViewTable views = ViewTable::Init(cfg.num_prot_epts, cfg.key_id_capacity, cfg.seed);
  std::vector<uint32_t> code_frames;
  LoadReport rep;

  const uint32_t code_end = b.code_base + RoundUp(static_cast<uint32_t>(b.code.size()), b.block_size);
  auto map_range = [&](uint32_t from, uint32_t to, bool exec, uint32_t& count) {
    for (uint32_t p = from / page; p < (to + page - 1) / page; ++p) {
      const uint32_t gpa = maps.MapPage(p);
      views.MapFrame(gpa, AddressMaps::kHpaBase + (gpa - AddressMaps::kGpaBase), exec);
      if (exec) code_frames.push_back(gpa);
      ++count;
    }
  };
  map_range(b.code_base, code_end, true, rep.code_pages);
  if (b.data_size) map_range(layout::kDataBase, data_end, false, rep.data_pages);
  map_range(stack_base, 0x10000, false, rep.stack_pages);

  try {
    views.RegisterProgram(code_frames);
  } catch (const std::exception& e) {
    throw LoadError(e.what());
  }

  const uint32_t frames = maps.mapped_frames();
  HostMemory memory(AddressMaps::kHpaBase * page, frames * page);
  Mmu mmu(maps, views, cfg.mode, cfg.itlb_entries, cfg.dtlb_entries);
  MachineOptions opts;
  opts.integrity = cfg.integrity;
  opts.stack_base = stack_base;
  Machine m(std::move(mmu), std::move(memory), CryptoEngine(cfg.Master(), cfg.key_id_capacity), opts);

  // Everything starts as zeros under key 0, then each domain is written
  // through the view named by its signature.
  const Block zero{};
  for (uint32_t p = 0; p < maps.page_table.size(); ++p) {
    if (!maps.page_table[p]) continue;
    for (uint32_t off = 0; off < page; off += kCipherBlockSize) {
      m.WriteBlockThroughView(kDefaultUserView, static_cast<uint16_t>(p * page + off), zero);
    }
  }
  for (const auto& d : b.key_domains) {
    for (uint32_t a = d.start; a < d.start + d.length; a += kCipherBlockSize) {
      Block plain{};
      const uint32_t off = a - b.code_base;
      if (off < b.code.size()) {
        std::memcpy(plain.data(), b.code.data() + off, std::min<size_t>(kCipherBlockSize, b.code.size() - off));
      }
      m.WriteBlockThroughView(d.signature, static_cast<uint16_t>(a), plain);
    }
    rep.bytes_per_key[m.mmu().views().KeyOfView(d.signature)] += d.length;
  }
  rep.domains = b.key_domains.size();

  m.mmu().Activate(b.entry_signature);
  m.pc = b.entry_gla;
  m.regs[isa::kSigReg] = b.entry_signature;
  m.regs[isa::kSpReg] = 0xFFFE;
  if (report) *report = rep;
  return m;
}

}  // namespace keyflow
