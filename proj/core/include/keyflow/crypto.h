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

// Tweakable block cipher standing in for a multi-key memory encryption
// engine. Each key identifier selects an AES-128 key pair derived from a
// master secret; blocks are encrypted in single-block XTS form with the host
// physical block address as tweak:
//
//   T = AES(K2, tweak)     C = AES(K1, P ^ T) ^ T

#ifndef KEYFLOW_CRYPTO_H_
#define KEYFLOW_CRYPTO_H_

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

namespace keyflow {

inline constexpr size_t kCipherBlockSize = 16;
using Block = std::array<uint8_t, kCipherBlockSize>;
using KeyId = uint16_t;

// Architectural ceiling on key identifiers (15 bits).
inline constexpr uint32_t kMaxKeyIdCapacity = 1u << 15;

class CryptoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MasterSecret {
  std::array<uint8_t, 32> bytes{};

  // SHA-256 of an arbitrary passphrase.
  static MasterSecret FromPassphrase(std::string_view passphrase);
  // Exactly 64 hex digits.
  static MasterSecret FromHex(std::string_view hex);
};

struct CipherKey {
  std::array<uint8_t, 16> k1{};  // data key
  std::array<uint8_t, 16> k2{};  // tweak key
  friend bool operator==(const CipherKey&, const CipherKey&) = default;
};

// K1 || K2 = HMAC-SHA256(master, kid as 2 little-endian bytes).
// Throws CryptoError when kid >= capacity.
CipherKey DeriveKey(const MasterSecret& master, KeyId kid, uint32_t capacity);

// Per-instance engine with a lazily built cipher-context cache. Copies share
// nothing: a copy starts with an empty cache, so copies may be used from
// different threads.
class CryptoEngine {
 public:
  explicit CryptoEngine(const MasterSecret& master, uint32_t capacity = 64);
  CryptoEngine(const CryptoEngine& other);
  CryptoEngine& operator=(const CryptoEngine& other);
  CryptoEngine(CryptoEngine&&) noexcept;
  CryptoEngine& operator=(CryptoEngine&&) noexcept;
  ~CryptoEngine();

  uint32_t capacity() const { return capacity_; }

  Block Encrypt(KeyId kid, uint64_t tweak, const Block& plaintext);
  Block Decrypt(KeyId kid, uint64_t tweak, const Block& ciphertext);

  // Integrity tag of a stored ciphertext block: the first 8 bytes of its
  // encryption under the same key with the tweak's top bit set.
  uint64_t Tag(KeyId kid, uint64_t tweak, const Block& ciphertext);

 private:
  struct Contexts;
  Contexts& ContextsFor(KeyId kid);

  MasterSecret master_;
  uint32_t capacity_;
  std::map<KeyId, std::unique_ptr<Contexts>> cache_;
};

}  // namespace keyflow

#endif  // KEYFLOW_CRYPTO_H_
