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

#include "cli.h"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "keyflow/config.h"
#include "keyflow/container.h"
#include "keyflow/fault.h"
#include "keyflow/instrument.h"
#include "keyflow/isa.h"
#include "keyflow/loader.h"
#include "keyflow/rng.h"

namespace keyflow::cli {

namespace {

// Flags that override configuration fields.
struct ConfigFlags {
  std::string config_path;
  std::optional<uint16_t> s_low, s_high;
  std::optional<uint32_t> num_prot_epts, key_capacity, block_size, page_size, itlb, dtlb, stack_size;
  std::optional<std::string> mode, master_secret;
  std::optional<uint64_t> seed;
  bool integrity = false;
  bool encrypted_ept = false;

  void Attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file (overrides $KEYFLOW_CONFIG)");
    app->add_option("--s-low", s_low, "lowest protected signature");
    app->add_option("--s-high", s_high, "highest protected signature");
    app->add_option("--num-prot-epts", num_prot_epts, "number of protected views");
    app->add_option("--key-capacity", key_capacity, "key-id capacity");
    app->add_option("--block-size", block_size, "encryption-block size (16, 32, 64)");
    app->add_option("--page-size", page_size, "page size in bytes");
    app->add_option("--itlb", itlb, "instruction TLB entries");
    app->add_option("--dtlb", dtlb, "data TLB entries");
    app->add_option("--stack-size", stack_size, "stack bytes");
    app->add_option("--mode", mode, "aliasing | keyreg");
    app->add_option("--master-secret", master_secret, "passphrase or 64 hex digits");
    app->add_option("--seed", seed, "seed for every random choice");
    app->add_flag("--integrity", integrity, "integrity-checking encryption");
    app->add_flag("--encrypted-ept", encrypted_ept, "view entries stored encrypted");
  }

  SystemConfig Resolve() const {
    SystemConfig c;
    if (const char* env = std::getenv("KEYFLOW_CONFIG"); env && *env) c = SystemConfig::FromFile(env, c);
    if (!config_path.empty()) c = SystemConfig::FromFile(config_path, c);
    if (s_low) c.range.low = *s_low;
    if (s_high) c.range.high = *s_high;
    if (num_prot_epts) c.num_prot_epts = *num_prot_epts;
    if (key_capacity) c.key_id_capacity = *key_capacity;
    if (block_size) c.block_size = *block_size;
    if (page_size) c.page_size = *page_size;
    if (itlb) c.itlb_entries = *itlb;
    if (dtlb) c.dtlb_entries = *dtlb;
    if (stack_size) c.stack_size = *stack_size;
    if (master_secret) c.master_secret = *master_secret;
    if (seed) c.seed = *seed;
    if (integrity) c.integrity = true;
    if (encrypted_ept) c.encrypted_ept = true;
    if (mode) {
      auto m = ParseExecMode(*mode);
      if (!m) throw ConfigError("--mode must be 'aliasing' or 'keyreg'");
      c.mode = *m;
    }
    c.Validate();
    return c;
  }
};

std::string ReadFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFile(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

InstrumentConfig BuildConfig(const SystemConfig& c, bool instrument, bool headers, bool default_indirect) {
  InstrumentConfig ic;
  ic.range = c.range;
  ic.block_size = c.block_size;
  ic.instrument = instrument;
  ic.headers = headers;
  ic.default_indirect = default_indirect;
  ic.seed = c.seed;
  return ic;
}

void PrintCounters(std::ostream& out, const InstrumentedBinary& b, const Counters& k) {
  out << "summary (counter model - not wall-clock):\n"
      << std::fixed << std::setprecision(2) << "  code_size_overhead_percent = " << b.stats.overhead_percent() << '\n'
      << "  static_ksw = " << b.stats.ksw << '\n'
      << "  dynamic_ksw = " << k.ksw << '\n'
      << "  committed = " << k.committed << '\n'
      << "  view_switches = " << k.view_switches << '\n'
      << "  itlb_misses = " << k.itlb_misses << '\n'
      << "  dtlb_load_misses = " << k.dtlb_load_misses << '\n'
      << "  dtlb_store_misses = " << k.dtlb_store_misses << '\n'
      << "  tlb_misses = " << k.tlb_misses() << '\n';
}

int CmdBuild(const std::string& src, const std::string& out_path, const std::string& report_path, bool no_instrument,
             bool no_headers, bool default_indirect, const SystemConfig& cfg, std::ostream& out) {
  const std::string source = ReadFile(src);
  Program program;
  try {
    program = Assemble(source);
  } catch (const AssembleError& e) {
    throw AssembleError(e.line(), src + ":" + std::to_string(e.line()) + ": " + e.reason());
  }
  BinaryContainer c;
  c.binary = Instrument(program, BuildConfig(cfg, !no_instrument, !no_headers, default_indirect));
  c.page_size = cfg.page_size;
  c.source = source;
  c.seed = cfg.seed;
  c.range = cfg.range;
  SaveContainer(c, out_path);
  const std::string report = InstrumentationReport(c.binary);
  if (!report_path.empty()) WriteFile(report_path, report);
  out << report;
  const auto& s = c.binary.stats;
  if (c.binary.instrumented && s.ksw != 2 * s.call_sites + s.headers + s.footers) {
    throw std::logic_error("static KSW count does not match 2*call_sites + headers + footers");
  }
  return kOk;
}

int CmdRun(const std::string& path, uint64_t max_steps, const std::string& json_path, const SystemConfig& cfg,
           std::ostream& out, std::ostream& err) {
  const BinaryContainer c = LoadContainerFile(path);
  LoadReport lr;
  Machine m = Load(c, cfg, &lr);
  const Outcome o = m.Run(max_steps);
  if (!json_path.empty()) WriteFile(json_path, o.ToJson() + "\n");
  out << "mode = " << ExecModeName(cfg.mode) << '\n' << lr.ToText() << "output:";
  for (uint16_t v : o.output) out << ' ' << v;
  out << '\n';
  PrintCounters(out, c.binary, o.counters);
  switch (o.status) {
    case RunStatus::kHalted:
      out << "outcome = halted\n";
      return kOk;
    case RunStatus::kTrapped:
      out << "outcome = trapped\n";
      err << "trap: " << TrapKindName(o.trap->kind) << " at pc 0x" << std::hex << o.trap->pc << std::dec
          << " after " << o.trap->committed << " instructions: " << o.trap->detail << '\n';
      return kTrap;
    case RunStatus::kTimeout:
      out << "outcome = timeout\n";
      err << "timeout after " << max_steps << " steps\n";
      return kTrap;
  }
  return kInvariant;
}

struct CampaignArgs {
  std::string container;
  std::string model = "pc";
  size_t n = 1000;
  unsigned jobs = 1;
  bool cross_domain = false;
  bool transient = false;
  bool one_shot = false;
  bool compare = false;
  std::string csv_path;
  std::string json_path;
};

int CmdCampaign(const CampaignArgs& a, const SystemConfig& cfg, std::ostream& out) {
  const BinaryContainer c = LoadContainerFile(a.container);
  auto kind = ParseFaultKind(a.model);
  if (!kind) throw ConfigError("--model must be one of pc, code, reg, calltarget, epte, skip");
  FaultModel model{*kind, a.cross_domain, a.transient, a.one_shot};
  CampaignOptions opts;
  opts.jobs = a.jobs;
  opts.encrypted_ept = cfg.encrypted_ept;

  const Machine loaded = Load(c, cfg);
  const GoldenRun golden = RecordGolden(loaded, c.binary);
  const auto specs = EnumerateOrSample(loaded, c.binary, golden, model, a.n, cfg.seed);
  CampaignReport rep = RunCampaignWithSpecs(loaded, golden, specs, opts);
  rep.model = std::string(FaultKindName(*kind));
  rep.seed = cfg.seed;
  if (!a.csv_path.empty()) WriteFile(a.csv_path, rep.ToCsv());
  if (!a.json_path.empty()) WriteFile(a.json_path, rep.ToJson());
  out << (c.binary.instrumented ? "[instrumented]\n" : "[baseline]\n") << rep.Summary();

  if (a.compare) {
    if (c.source.empty()) throw ConfigError("container has no embedded source; rebuild it to compare");
    BinaryContainer base;
    base.binary = Instrument(Assemble(c.source), BuildConfig(cfg, false, false, false));
    const Machine base_loaded = Load(base.binary, cfg);
    const GoldenRun base_golden = RecordGolden(base_loaded, base.binary);
    std::vector<FaultSpec> base_specs;
    if (*kind == FaultKind::kSkipInstr || *kind == FaultKind::kCallTargetBitflip) {
      base_specs = RetargetSpecs(specs, golden, base_golden);
    } else {
      base_specs = EnumerateOrSample(base_loaded, base.binary, base_golden, model, a.n, cfg.seed);
    }
    CampaignReport brep = RunCampaignWithSpecs(base_loaded, base_golden, base_specs, opts);
    brep.model = rep.model;
    brep.seed = cfg.seed;
    if (!a.csv_path.empty()) WriteFile(a.csv_path + ".baseline.csv", brep.ToCsv());
    if (!a.json_path.empty()) WriteFile(a.json_path + ".baseline.json", brep.ToJson());
    out << "[uninstrumented]\n" << brep.Summary();
    out << std::fixed << std::setprecision(4) << "defense_delta = " << rep.detection_rate() - brep.detection_rate()
        << "  silent_delta = "
        << rep.rate(FaultClass::kSilentCorruption) - brep.rate(FaultClass::kSilentCorruption) << '\n';
  }
  return kOk;
}

int CmdDensity(uint64_t samples, uint64_t seed, std::ostream& out) {
  const isa::Density d = isa::ValidEncodingDensity();
  out << "valid_patterns = " << d.valid_patterns << " / 4294967296\n"
      << std::setprecision(10) << "density = " << d.value() << '\n';
  if (samples) {
    Rng rng(seed);
    uint64_t ok = 0;
    for (uint64_t i = 0; i < samples; ++i) {
      const uint64_t r = rng.Next();
      const std::array<uint8_t, 4> b = {static_cast<uint8_t>(r), static_cast<uint8_t>(r >> 8),
                                        static_cast<uint8_t>(r >> 16), static_cast<uint8_t>(r >> 24)};
      ok += isa::Decode(b).ok();
    }
    const double p = d.value();
    out << "monte_carlo = " << double(ok) / samples << " over " << samples << " samples (3 sigma = "
        << 3 * std::sqrt(p * (1 - p) / samples) << ")\n";
  }
  return kOk;
}

}  // namespace

int Main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"keyflow: code-encryption control-flow integrity on a toy ISA"};
  app.require_subcommand(1);

  ConfigFlags build_flags, run_flags, campaign_flags;
  std::string build_src, build_out = "a.kfc.json", build_report;
  bool no_instrument = false, no_headers = false, default_indirect = false;
  auto* build = app.add_subcommand("build", "assemble and instrument a program");
  build->add_option("source", build_src, "assembly file")->required();
  build->add_option("-o,--output", build_out, "container path");
  build->add_option("--report", build_report, "write the instrumentation report here");
  build->add_flag("--no-instrument", no_instrument, "baseline build: one domain, key 0");
  build->add_flag("--no-headers", no_headers, "shared-key build without call headers");
  build->add_flag("--default-indirect", default_indirect, "unannotated CALLR targets the default view");
  build_flags.Attach(build);

  std::string run_container, run_json;
  uint64_t max_steps = 10000000;
  auto* run = app.add_subcommand("run", "load and execute a container");
  run->add_option("container", run_container, "container path")->required();
  run->add_option("--max-steps", max_steps, "step budget");
  run->add_option("--json", run_json, "write the run report here");
  run_flags.Attach(run);

  CampaignArgs ca;
  auto* campaign = app.add_subcommand("campaign", "fault-injection campaign");
  campaign->add_option("container", ca.container, "container path")->required();
  campaign->add_option("--model", ca.model, "pc | code | reg | calltarget | epte | skip");
  campaign->add_option("--n", ca.n, "number of trials (skip: 0 enumerates)");
  campaign->add_option("--jobs", ca.jobs, "parallel workers");
  campaign->add_flag("--cross-domain", ca.cross_domain, "calltarget: only flips leaving the key domain");
  campaign->add_flag("--transient", ca.transient, "reg: flip affects one read");
  campaign->add_flag("--one-shot", ca.one_shot, "epte: flip affects the next fetch only");
  campaign->add_flag("--compare-uninstrumented", ca.compare, "also run the baseline build and print the delta");
  campaign->add_option("--csv", ca.csv_path, "per-trial CSV path");
  campaign->add_option("--json", ca.json_path, "report JSON path");
  campaign_flags.Attach(campaign);

  uint64_t samples = 0, density_seed = 1;
  auto* density = app.add_subcommand("density", "valid-encoding density of the opcode table");
  density->add_option("--monte-carlo", samples, "cross-check with this many random words");
  density->add_option("--seed", density_seed, "seed for the cross-check");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*build) {
      return CmdBuild(build_src, build_out, build_report, no_instrument, no_headers, default_indirect,
                      build_flags.Resolve(), out);
    }
    if (*run) return CmdRun(run_container, max_steps, run_json, run_flags.Resolve(), out, err);
    if (*campaign) return CmdCampaign(ca, campaign_flags.Resolve(), out);
    if (*density) return CmdDensity(samples, density_seed, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const AssembleError& e) {
    err << "assembly error: " << e.what() << '\n';
    return kUsage;
  } catch (const InstrumentError& e) {
    err << "instrumentation error: " << e.what() << '\n';
    return kUsage;
  } catch (const ContainerError& e) {
    err << "container error: " << e.what() << '\n';
    return kUsage;
  } catch (const LoadError& e) {
    err << "load error: " << e.what() << '\n';
    return kUsage;
  } catch (const FaultError& e) {
    err << "campaign error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInvariant;
  }
  return kUsage;
}

}  // namespace keyflow::cli
