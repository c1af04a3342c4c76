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

#include "keyflow/container.h"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace keyflow {

using nlohmann::json;

namespace {

std::string ToHex(const std::vector<uint8_t>& bytes) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (uint8_t b : bytes) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 15]);
  }
  return s;
}

std::vector<uint8_t> FromHex(const std::string& s) {
  if (s.size() % 2) throw ContainerError("code hex has odd length");
  auto val = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw ContainerError("code hex contains a non-hex digit");
  };
  std::vector<uint8_t> out(s.size() / 2);
  for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<uint8_t>(val(s[2 * i]) << 4 | val(s[2 * i + 1]));
  return out;
}

const char* CallKindName(CallKind k) {
  switch (k) {
    case CallKind::kDirect: return "direct";
    case CallKind::kIndirect: return "indirect";
    case CallKind::kExternal: return "external";
  }
  return "?";
}

CallKind ParseCallKind(const std::string& s) {
  if (s == "direct") return CallKind::kDirect;
  if (s == "indirect") return CallKind::kIndirect;
  if (s == "external") return CallKind::kExternal;
  throw ContainerError("unknown call kind '" + s + "'");
}

}  // namespace

std::string ContainerToJson(const BinaryContainer& c) {
  const InstrumentedBinary& b = c.binary;
  json j;
  j["format"] = kContainerFormat;
  j["code"] = ToHex(b.code);
  j["code_base"] = b.code_base;
  json domains = json::array();
  for (const auto& d : b.key_domains) domains.push_back({{"start", d.start}, {"length", d.length}, {"signature", d.signature}});
  j["key_domains"] = domains;
  j["entry"] = {{"gla", b.entry_gla}, {"signature", b.entry_signature}};
  j["data_size"] = b.data_size;
  j["block_size"] = b.block_size;
  j["page_size"] = c.page_size;
  j["instrumented"] = b.instrumented;
  j["headers"] = b.headers;
  j["slot_kinds"] = b.slot_kinds;
  json funcs = json::array();
  for (const auto& f : b.functions) {
    funcs.push_back({{"name", f.name}, {"start", f.start}, {"body_start", f.body_start}, {"size", f.size},
                     {"signature", f.signature}, {"external", f.external}});
  }
  j["functions"] = funcs;
  json headers = json::array();
  for (const auto& h : b.header_table) {
    headers.push_back({{"function", h.function}, {"start", h.start}, {"signature", h.signature}, {"indirect", h.indirect}});
  }
  j["header_table"] = headers;
  json sites = json::array();
  for (const auto& s : b.call_sites) {
    sites.push_back({{"call", s.call_gla}, {"return", s.return_gla}, {"kind", CallKindName(s.kind)},
                     {"caller", s.caller}, {"callee", s.callee}, {"caller_signature", s.caller_signature},
                     {"target_signature", s.target_signature}});
  }
  j["call_sites"] = sites;
  const auto& s = b.stats;
  j["stats"] = {{"ksw", s.ksw},
                {"call_sites", s.call_sites},
                {"headers", s.headers},
                {"footers", s.footers},
                {"baseline_size", s.baseline_size},
                {"instrumented_size", s.instrumented_size},
                {"header_footer_bytes", s.header_footer_bytes},
                {"prologue_epilogue_bytes", s.prologue_epilogue_bytes},
                {"padding_bytes", s.padding_bytes}};
  j["build"] = {{"seed", c.seed}, {"s_low", c.range.low}, {"s_high", c.range.high}};
  j["source"] = c.source;
  return j.dump(2) + "\n";
}

BinaryContainer ContainerFromJson(const std::string& text) {
  BinaryContainer c;
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != kContainerFormat) throw ContainerError("not a keyflow container");
    InstrumentedBinary& b = c.binary;
    b.code = FromHex(j.at("code").get<std::string>());
    b.code_base = j.at("code_base").get<uint16_t>();
    for (const auto& d : j.at("key_domains")) {
      b.key_domains.push_back({d.at("start").get<uint16_t>(), d.at("length").get<uint32_t>(), d.at("signature").get<Signature>()});
    }
    b.entry_gla = j.at("entry").at("gla").get<uint16_t>();
    b.entry_signature = j.at("entry").at("signature").get<Signature>();
    b.data_size = j.at("data_size").get<uint32_t>();
    b.block_size = j.at("block_size").get<uint32_t>();
    c.page_size = j.at("page_size").get<uint32_t>();
    b.instrumented = j.value("instrumented", false);
    b.headers = j.value("headers", false);
    b.slot_kinds = j.value("slot_kinds", std::string());
    if (j.contains("functions")) {
      for (const auto& f : j["functions"]) {
        b.functions.push_back({f.at("name").get<std::string>(), f.at("start").get<uint16_t>(),
                               f.at("body_start").get<uint16_t>(), f.at("size").get<uint32_t>(),
                               f.at("signature").get<Signature>(), f.at("external").get<bool>()});
      }
    }
    if (j.contains("header_table")) {
      for (const auto& h : j["header_table"]) {
        b.header_table.push_back({h.at("function").get<std::string>(), h.at("start").get<uint16_t>(),
                                  h.at("signature").get<Signature>(), h.at("indirect").get<bool>()});
      }
    }
    if (j.contains("call_sites")) {
      for (const auto& s : j["call_sites"]) {
        CallSiteInfo info;
        info.call_gla = s.at("call").get<uint16_t>();
        info.return_gla = s.at("return").get<uint16_t>();
        info.kind = ParseCallKind(s.at("kind").get<std::string>());
        info.caller = s.at("caller").get<std::string>();
        info.callee = s.at("callee").get<std::string>();
        info.caller_signature = s.at("caller_signature").get<Signature>();
        info.target_signature = s.at("target_signature").get<Signature>();
        b.call_sites.push_back(info);
      }
    }
    if (j.contains("stats")) {
      const auto& s = j["stats"];
      auto& t = b.stats;
      t.ksw = s.value("ksw", 0u);
      t.call_sites = s.value("call_sites", 0u);
      t.headers = s.value("headers", 0u);
      t.footers = s.value("footers", 0u);
      t.baseline_size = s.value("baseline_size", 0u);
      t.instrumented_size = s.value("instrumented_size", 0u);
      t.header_footer_bytes = s.value("header_footer_bytes", 0u);
      t.prologue_epilogue_bytes = s.value("prologue_epilogue_bytes", 0u);
      t.padding_bytes = s.value("padding_bytes", 0u);
    }
    if (j.contains("build")) {
      c.seed = j["build"].value("seed", uint64_t{1});
      c.range.low = j["build"].value("s_low", Signature{3});
      c.range.high = j["build"].value("s_high", Signature{63});
    }
    c.source = j.value("source", std::string());
  } catch (const json::exception& e) {
    throw ContainerError(std::string("malformed container: ") + e.what());
  }
  return c;
}

void SaveContainer(const BinaryContainer& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ContainerError("cannot write " + path);
  out << ContainerToJson(c);
}

BinaryContainer LoadContainerFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContainerError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ContainerFromJson(ss.str());
}

}  // namespace keyflow
