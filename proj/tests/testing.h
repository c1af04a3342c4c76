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

// Helpers shared by the unit tests and the acceptance binary.

#ifndef KEYFLOW_TESTS_TESTING_H_
#define KEYFLOW_TESTS_TESTING_H_

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "keyflow/config.h"
#include "keyflow/instrument.h"
#include "keyflow/loader.h"
#include "keyflow/program.h"

namespace keyflow::testing {

inline const std::vector<std::string>& CorpusNames() {
  static const std::vector<std::string> names = {
      "arith",  "loop",      "direct_calls", "multi_caller", "indirect2", "indirect3", "recursion",
      "multi_return", "nested", "memory", "extern", "two_domain", "fib"};
  return names;
}

inline std::string CorpusPath(const std::string& name) { return std::string(KEYFLOW_CORPUS_DIR) + "/" + name + ".s"; }

inline std::string ReadText(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Program CorpusProgram(const std::string& name) { return Assemble(ReadText(CorpusPath(name))); }

inline InstrumentConfig BuildOptions(const SystemConfig& cfg, bool instrument = true, bool headers = true) {
  InstrumentConfig ic;
  ic.range = cfg.range;
  ic.block_size = cfg.block_size;
  ic.instrument = instrument;
  ic.headers = headers;
  ic.seed = cfg.seed;
  return ic;
}

inline InstrumentedBinary BuildCorpus(const std::string& name, const SystemConfig& cfg = {}, bool instrument = true,
                                      bool headers = true) {
  return Instrument(CorpusProgram(name), BuildOptions(cfg, instrument, headers));
}

// Standard error of a binomial proportion.
inline double Sigma(double p, double n) { return std::sqrt(p * (1.0 - p) / n); }

}  // namespace keyflow::testing

#endif  // KEYFLOW_TESTS_TESTING_H_
