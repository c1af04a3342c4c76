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

#include "keyflow/signatures.h"

#include <algorithm>
#include <numeric>

#include "keyflow/rng.h"

namespace keyflow {

namespace {

// Hands out distinct values from the range until it is exhausted, then
// uniform draws with repetition.
class SignatureSource {
 public:
  SignatureSource(SignatureRange range, uint64_t seed) : range_(range), rng_(seed) {
    pool_.resize(range.size());
    std::iota(pool_.begin(), pool_.end(), range.low);
  }

  Signature Next() {
    if (next_ < pool_.size()) {
      // Incremental Fisher-Yates: pick among the not-yet-used tail.
      const size_t pick = next_ + rng_.Below(pool_.size() - next_);
      std::swap(pool_[next_], pool_[pick]);
      return pool_[next_++];
    }
    return static_cast<Signature>(rng_.Between(range_.low, range_.high));
  }

 private:
  SignatureRange range_;
  Rng rng_;
  std::vector<Signature> pool_;
  size_t next_ = 0;
};

std::optional<std::string> TargetSetLabel(const Program& p, const Statement& st) {
  for (const auto& l : st.labels) {
    if (p.indirect_target_sets.count(l)) return l;
  }
  return std::nullopt;
}

}  // namespace

std::vector<IndirectClass> MergeTargetSets(const Program& program) {
  struct Set {
    CallSiteId site;
    std::vector<std::string> members;
  };
  std::vector<Set> sets;
  for (size_t fi = 0; fi < program.functions.size(); ++fi) {
    const auto& f = program.functions[fi];
    for (size_t si = 0; si < f.body.size(); ++si) {
      const auto& st = f.body[si];
      if (st.instruction.op != isa::Opcode::kCallr) continue;
      if (auto label = TargetSetLabel(program, st)) {
        sets.push_back({{fi, si}, program.indirect_target_sets.at(*label)});
      }
    }
  }

  std::vector<size_t> parent(sets.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::map<std::string, size_t> owner;
  for (size_t i = 0; i < sets.size(); ++i) {
    for (const auto& m : sets[i].members) {
      auto [it, inserted] = owner.emplace(m, i);
      if (!inserted) {
        size_t a = find(i), b = find(it->second);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
    }
  }

  std::vector<IndirectClass> classes;
  std::map<size_t, size_t> root_to_class;
  for (size_t i = 0; i < sets.size(); ++i) {
    const size_t root = find(i);
    auto [it, inserted] = root_to_class.emplace(root, classes.size());
    if (inserted) classes.emplace_back();
    IndirectClass& c = classes[it->second];
    c.sites.push_back(sets[i].site);
    for (const auto& m : sets[i].members) {
      if (std::find(c.members.begin(), c.members.end(), m) == c.members.end()) c.members.push_back(m);
    }
  }
  return classes;
}

SignatureMap AssignSignatures(const Program& program, SignatureRange range, uint64_t seed, bool headers) {
  if (range.size() == 0) throw InstrumentError("empty signature range");
  if (range.low < kFirstProtectedSignature) {
    throw InstrumentError("signature range must start at or above 3 (views 0-2 are reserved)");
  }

  SignatureMap map;
  map.classes = MergeTargetSets(program);
  for (size_t c = 0; c < map.classes.size(); ++c) {
    for (const auto& site : map.classes[c].sites) map.class_of_site[site] = c;
    for (const auto& m : map.classes[c].members) {
      const Function* f = program.Find(m);
      if (f && f->external) {
        throw InstrumentError("extern function '" + m + "' cannot be an indirect target of protected code");
      }
      map.class_of_function[m] = c;
    }
  }

  SignatureSource source(range, seed);
  auto draw = [&] {
    ++map.domain_count;
    return source.Next();
  };

  // Bodies first, in program order. Without headers, members of an indirect
  // class share the class signature directly (induced collision).
  std::vector<bool> class_drawn(map.classes.size(), false);
  for (const auto& f : program.functions) {
    if (f.external) continue;
    auto cls = map.class_of_function.find(f.name);
    if (!headers && cls != map.class_of_function.end()) {
      IndirectClass& c = map.classes[cls->second];
      if (!class_drawn[cls->second]) {
        c.signature = draw();
        class_drawn[cls->second] = true;
      }
      map.body[f.name] = c.signature;
    } else {
      map.body[f.name] = draw();
    }
  }

  if (headers) {
    for (size_t fi = 0; fi < program.functions.size(); ++fi) {
      const auto& f = program.functions[fi];
      if (f.external) continue;
      for (size_t si = 0; si < f.body.size(); ++si) {
        const auto& st = f.body[si];
        if (st.instruction.op != isa::Opcode::kCall) continue;
        const Function* callee = program.Find(st.symbol);
        if (callee && !callee->external) map.direct_headers[{fi, si}] = draw();
      }
    }
    for (size_t c = 0; c < map.classes.size(); ++c) map.classes[c].signature = draw();
  }

  map.entry = map.body.at(program.functions[program.entry_index()].name);
  return map;
}

}  // namespace keyflow
