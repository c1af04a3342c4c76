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

#include "keyflow/crypto.h"

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/sha.h>

#include <cstring>

namespace keyflow {

namespace {

struct CtxDeleter {
  void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};
using CtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CtxDeleter>;

CtxPtr MakeEcb(const std::array<uint8_t, 16>& key, bool encrypt) {
  CtxPtr ctx(EVP_CIPHER_CTX_new());
  if (!ctx || EVP_CipherInit_ex(ctx.get(), EVP_aes_128_ecb(), nullptr, key.data(), nullptr, encrypt ? 1 : 0) != 1) {
    throw CryptoError("cipher context initialisation failed");
  }
  EVP_CIPHER_CTX_set_padding(ctx.get(), 0);
  return ctx;
}

Block RunEcb(EVP_CIPHER_CTX* ctx, const Block& in) {
  Block out{};
  int len = 0;
  if (EVP_CipherUpdate(ctx, out.data(), &len, in.data(), static_cast<int>(in.size())) != 1 ||
      len != static_cast<int>(kCipherBlockSize)) {
    throw CryptoError("block cipher failure");
  }
  return out;
}

Block TweakBlock(uint64_t tweak) {
  Block t{};
  for (int i = 0; i < 8; ++i) t[i] = static_cast<uint8_t>(tweak >> (8 * i));
  return t;
}

int HexValue(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

MasterSecret MasterSecret::FromPassphrase(std::string_view passphrase) {
  MasterSecret m;
  SHA256(reinterpret_cast<const unsigned char*>(passphrase.data()), passphrase.size(), m.bytes.data());
  return m;
}

MasterSecret MasterSecret::FromHex(std::string_view hex) {
  if (hex.size() != 64) throw CryptoError("master secret must be 64 hex digits");
  MasterSecret m;
  for (size_t i = 0; i < 32; ++i) {
    const int hi = HexValue(hex[2 * i]), lo = HexValue(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw CryptoError("master secret contains a non-hex digit");
    m.bytes[i] = static_cast<uint8_t>(hi << 4 | lo);
  }
  return m;
}

CipherKey DeriveKey(const MasterSecret& master, KeyId kid, uint32_t capacity) {
  if (kid >= capacity) {
    throw CryptoError("key id " + std::to_string(kid) + " outside capacity " + std::to_string(capacity));
  }
  const uint8_t msg[2] = {static_cast<uint8_t>(kid), static_cast<uint8_t>(kid >> 8)};
  uint8_t mac[32];
  unsigned int len = 0;
  if (!HMAC(EVP_sha256(), master.bytes.data(), static_cast<int>(master.bytes.size()), msg, sizeof msg, mac, &len) ||
      len != 32) {
    throw CryptoError("key derivation failed");
  }
  CipherKey key;
  std::memcpy(key.k1.data(), mac, 16);
  std::memcpy(key.k2.data(), mac + 16, 16);
  return key;
}

struct CryptoEngine::Contexts {
  CtxPtr enc1, dec1, enc2;
};

CryptoEngine::CryptoEngine(const MasterSecret& master, uint32_t capacity) : master_(master), capacity_(capacity) {
  if (capacity == 0 || capacity > kMaxKeyIdCapacity) throw CryptoError("key id capacity must be in [1, 32768]");
}

CryptoEngine::CryptoEngine(const CryptoEngine& other) : master_(other.master_), capacity_(other.capacity_) {}

CryptoEngine& CryptoEngine::operator=(const CryptoEngine& other) {
  if (this != &other) {
    master_ = other.master_;
    capacity_ = other.capacity_;
    cache_.clear();
  }
  return *this;
}

CryptoEngine::CryptoEngine(CryptoEngine&&) noexcept = default;
CryptoEngine& CryptoEngine::operator=(CryptoEngine&&) noexcept = default;
CryptoEngine::~CryptoEngine() = default;

CryptoEngine::Contexts& CryptoEngine::ContextsFor(KeyId kid) {
  auto it = cache_.find(kid);
  if (it != cache_.end()) return *it->second;
  const CipherKey key = DeriveKey(master_, kid, capacity_);
  auto ctx = std::make_unique<Contexts>();
  ctx->enc1 = MakeEcb(key.k1, true);
  ctx->dec1 = MakeEcb(key.k1, false);
  ctx->enc2 = MakeEcb(key.k2, true);
  return *cache_.emplace(kid, std::move(ctx)).first->second;
}

Block CryptoEngine::Encrypt(KeyId kid, uint64_t tweak, const Block& plaintext) {
  Contexts& c = ContextsFor(kid);
  const Block t = RunEcb(c.enc2.get(), TweakBlock(tweak));
  Block x;
  for (size_t i = 0; i < kCipherBlockSize; ++i) x[i] = plaintext[i] ^ t[i];
  x = RunEcb(c.enc1.get(), x);
  for (size_t i = 0; i < kCipherBlockSize; ++i) x[i] ^= t[i];
  return x;
}

Block CryptoEngine::Decrypt(KeyId kid, uint64_t tweak, const Block& ciphertext) {
  Contexts& c = ContextsFor(kid);
  const Block t = RunEcb(c.enc2.get(), TweakBlock(tweak));
  Block x;
  for (size_t i = 0; i < kCipherBlockSize; ++i) x[i] = ciphertext[i] ^ t[i];
  x = RunEcb(c.dec1.get(), x);
  for (size_t i = 0; i < kCipherBlockSize; ++i) x[i] ^= t[i];
  return x;
}

uint64_t CryptoEngine::Tag(KeyId kid, uint64_t tweak, const Block& ciphertext) {
  const Block e = Encrypt(kid, tweak | (uint64_t{1} << 63), ciphertext);
  uint64_t tag = 0;
  for (int i = 0; i < 8; ++i) tag |= uint64_t{e[i]} << (8 * i);
  return tag;
}

}  // namespace keyflow
