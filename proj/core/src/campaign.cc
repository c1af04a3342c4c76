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

#include <algorithm>
#include <atomic>
#include <iomanip>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "keyflow/fault.h"

namespace keyflow {

namespace {

TrialResult RunTrial(const Machine& loaded, const GoldenRun& golden, const FaultSpec& spec, uint64_t max_steps,
                     bool encrypted_ept) {
  Machine m = loaded;
  while (!m.done() && m.committed() < spec.trigger) m.Step();
  if (!m.done()) Inject(m, spec, encrypted_ept);
  const uint64_t used = m.committed();
  const Outcome o = m.Run(max_steps > used ? max_steps - used : 0);
  TrialResult r;
  r.spec = spec;
  r.status = o.status;
  r.counters = o.counters;
  r.cls = Classify(golden.outcome, o);
  if (IsDetected(r.cls) && o.activation && o.trap->committed >= *o.activation) {
    r.latency = o.trap->committed - *o.activation;
  }
  return r;
}

}  // namespace

uint64_t CampaignReport::detected() const {
  uint64_t d = 0;
  for (const auto& [c, k] : counts) {
    if (IsDetected(c)) d += k;
  }
  return d;
}

double CampaignReport::detection_rate() const { return trials.empty() ? 0.0 : double(detected()) / trials.size(); }

double CampaignReport::rate(FaultClass c) const {
  auto it = counts.find(c);
  return trials.empty() || it == counts.end() ? 0.0 : double(it->second) / trials.size();
}

double CampaignReport::latency_at_least(uint64_t k) const {
  uint64_t total = 0, tail = 0;
  for (const auto& [lat, cnt] : latency_histogram) {
    total += cnt;
    if (lat >= k) tail += cnt;
  }
  return total ? double(tail) / total : 0.0;
}

double CampaignReport::latency_tail(uint64_t k) const {
  uint64_t tail = 0;
  for (const auto& [lat, cnt] : latency_histogram) {
    if (lat >= k) tail += cnt;
  }
  return trials.empty() ? 0.0 : double(tail) / trials.size();
}

std::string CampaignReport::ToJson() const {
  nlohmann::ordered_json j;
  j["model"] = model;
  j["n"] = trials.size();
  j["seed"] = seed;
  j["mode"] = mode;
  j["golden_length"] = golden_length;
  nlohmann::ordered_json c;
  for (int k = 0; k < kFaultClassCount; ++k) {
    const auto cls = static_cast<FaultClass>(k);
    auto it = counts.find(cls);
    c[std::string(FaultClassName(cls))] = it == counts.end() ? 0 : it->second;
  }
  j["counts"] = c;
  j["detection_rate"] = detection_rate();
  nlohmann::ordered_json h;
  for (const auto& [lat, cnt] : latency_histogram) h[std::to_string(lat)] = cnt;
  j["latency_histogram"] = h;
  j["counters"] = {{"committed", aggregate.committed},
                   {"ksw", aggregate.ksw},
                   {"view_switches", aggregate.view_switches},
                   {"itlb_misses", aggregate.itlb_misses},
                   {"dtlb_load_misses", aggregate.dtlb_load_misses},
                   {"dtlb_store_misses", aggregate.dtlb_store_misses}};
  return j.dump(2) + "\n";
}

std::string CampaignReport::ToCsv() const {
  std::ostringstream os;
  os << "index,kind,location,bit,t,class,latency\n";
  for (size_t i = 0; i < trials.size(); ++i) {
    const auto& t = trials[i];
    os << i << ',' << FaultKindName(t.spec.kind) << ',' << t.spec.Location() << ',' << int(t.spec.bit) << ','
       << t.spec.trigger << ',' << FaultClassName(t.cls) << ',';
    if (t.latency) os << *t.latency;
    os << '\n';
  }
  return os.str();
}

std::string CampaignReport::Summary() const {
  std::ostringstream os;
  os << "model = " << model << "  n = " << trials.size() << "  seed = " << seed << "  mode = " << mode << '\n';
  for (int k = 0; k < kFaultClassCount; ++k) {
    const auto cls = static_cast<FaultClass>(k);
    auto it = counts.find(cls);
    os << "  " << std::left << std::setw(22) << FaultClassName(cls) << (it == counts.end() ? 0 : it->second) << '\n';
  }
  os << std::fixed << std::setprecision(4) << "  detection_rate = " << detection_rate() << '\n';
  os << "  latency>=1 = " << latency_at_least(1) << "  latency>=3 = " << latency_at_least(3) << '\n';
  return os.str();
}

CampaignReport RunCampaignWithSpecs(const Machine& loaded, const GoldenRun& golden, const std::vector<FaultSpec>& specs,
                                    const CampaignOptions& options) {
  const uint64_t max_steps = options.max_steps ? options.max_steps : 4 * golden.trace.size() + 1000;
  std::vector<TrialResult> results(specs.size());
  const unsigned jobs = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(specs.size())));
  if (jobs <= 1) {
    for (size_t i = 0; i < specs.size(); ++i) {
      results[i] = RunTrial(loaded, golden, specs[i], max_steps, options.encrypted_ept);
    }
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(jobs);
    for (unsigned w = 0; w < jobs; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (size_t i = next++; i < specs.size(); i = next++) {
            results[i] = RunTrial(loaded, golden, specs[i], max_steps, options.encrypted_ept);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  CampaignReport rep;
  rep.golden_length = golden.trace.size();
  rep.mode = std::string(ExecModeName(loaded.mmu().mode()));
  if (!specs.empty()) rep.model = std::string(FaultKindName(specs.front().kind));
  for (const auto& r : results) {
    ++rep.counts[r.cls];
    if (r.latency) ++rep.latency_histogram[*r.latency];
    rep.aggregate.committed += r.counters.committed;
    rep.aggregate.ksw += r.counters.ksw;
    rep.aggregate.calls += r.counters.calls;
    rep.aggregate.rets += r.counters.rets;
    rep.aggregate.view_switches += r.counters.view_switches;
    rep.aggregate.itlb_misses += r.counters.itlb_misses;
    rep.aggregate.dtlb_load_misses += r.counters.dtlb_load_misses;
    rep.aggregate.dtlb_store_misses += r.counters.dtlb_store_misses;
  }
  rep.trials = std::move(results);
  return rep;
}

CampaignReport RunCampaign(const Machine& loaded, const InstrumentedBinary& binary, const FaultModel& model, size_t n,
                           uint64_t seed, const CampaignOptions& options) {
  const GoldenRun golden = RecordGolden(loaded, binary);
  const auto specs = EnumerateOrSample(loaded, binary, golden, model, n, seed);
  CampaignReport rep = RunCampaignWithSpecs(loaded, golden, specs, options);
  rep.model = std::string(FaultKindName(model.kind));
  rep.seed = seed;
  return rep;
}

Outcome RunReturnRedirect(const Machine& loaded, uint16_t from_return, uint16_t to_return, uint64_t max_steps) {
  Machine m = loaded;
  m.ArmReturnRedirect(from_return, to_return);
  return m.Run(max_steps);
}

}  // namespace keyflow
