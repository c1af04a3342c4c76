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

#include <benchmark/benchmark.h>

#include <array>

#include "keyflow/fault.h"
#include "keyflow/isa.h"
#include "keyflow/loader.h"
#include "keyflow/rng.h"
#include "testing.h"

namespace keyflow {
namespace {

void BM_Decode(benchmark::State& state) {
  Rng rng(1);
  std::array<std::array<uint8_t, 4>, 1024> words;
  for (auto& w : words) {
    const uint64_t r = rng.Next();
    w = {static_cast<uint8_t>(r % 17), static_cast<uint8_t>(r >> 8 & 15), static_cast<uint8_t>(r >> 16), 0};
  }
  size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(isa::Decode(words[i++ & 1023]));
  }
}
BENCHMARK(BM_Decode);

void BM_EncryptBlock(benchmark::State& state) {
  CryptoEngine e(MasterSecret::FromPassphrase("bench"));
  Block b{};
  uint64_t tweak = 0;
  for (auto _ : state) {
    b = e.Encrypt(5, tweak += 16, b);
    benchmark::DoNotOptimize(b);
  }
}
BENCHMARK(BM_EncryptBlock);

void BM_Instrument(benchmark::State& state) {
  const Program p = testing::CorpusProgram("nested");
  for (auto _ : state) benchmark::DoNotOptimize(Instrument(p, {}));
}
BENCHMARK(BM_Instrument);

// Whole-program execution per corpus program and mode.
void BM_Run(benchmark::State& state, const std::string& name, ExecMode mode, bool instrument) {
  SystemConfig cfg;
  cfg.mode = mode;
  const Machine loaded = Load(testing::BuildCorpus(name, cfg, instrument), cfg);
  uint64_t committed = 0;
  for (auto _ : state) {
    Machine m = loaded;
    committed = m.Run(1000000).counters.committed;
  }
  state.counters["committed"] = static_cast<double>(committed);
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(committed));
}
BENCHMARK_CAPTURE(BM_Run, fib_baseline, std::string("fib"), ExecMode::kAliasing, false);
BENCHMARK_CAPTURE(BM_Run, fib_aliasing, std::string("fib"), ExecMode::kAliasing, true);
BENCHMARK_CAPTURE(BM_Run, fib_keyreg, std::string("fib"), ExecMode::kKeyReg, true);
BENCHMARK_CAPTURE(BM_Run, nested_aliasing, std::string("nested"), ExecMode::kAliasing, true);

void BM_CampaignTrial(benchmark::State& state) {
  const auto b = testing::BuildCorpus("two_domain", {}, true, false);
  const Machine loaded = Load(b, SystemConfig{});
  const GoldenRun golden = RecordGolden(loaded, b);
  const auto specs = EnumerateOrSample(loaded, b, golden, {FaultKind::kCallTargetBitflip, true}, 64, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(RunCampaignWithSpecs(loaded, golden, specs));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(specs.size()));
}
BENCHMARK(BM_CampaignTrial);

}  // namespace
}  // namespace keyflow

BENCHMARK_MAIN();
