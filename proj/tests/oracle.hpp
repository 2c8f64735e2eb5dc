#pragma once

// Reference computations backed by OpenSSL, and shared fixtures.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "cfglab/builder.hpp"
#include "cfglab/crypto.hpp"

namespace ref {

using cfglab::Block128;
using cfglab::Word;

std::vector<std::uint8_t> aes256CbcEncrypt(std::span<const std::uint8_t, 32> key,
                                           std::span<const std::uint8_t, 16> iv,
                                           std::span<const std::uint8_t> plain);
std::vector<std::uint8_t> aes256CbcDecrypt(std::span<const std::uint8_t, 32> key,
                                           std::span<const std::uint8_t, 16> iv,
                                           std::span<const std::uint8_t> cipher);
std::array<std::uint8_t, 32> hmacSha256(std::span<const std::uint8_t> key,
                                        std::span<const std::uint8_t> msg);
std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> msg);

/// Word-level CBC decryption of a whole encrypted region.
std::vector<Word> decryptRegion(const cfglab::AesKey256& k, const cfglab::EncryptedBitstream& bs);
/// Raw block decryption dec_k(c).
Block128 decryptBlock(const cfglab::AesKey256& k, const Block128& c);

std::vector<std::uint8_t> fromHex(const std::string& hex);

/// One randomized build: keys, IV, 64..512 fabric words.
struct Case {
  cfglab::AesKey256 aes;
  cfglab::HmacKey hmac;
  cfglab::BuildOptions opts;
  cfglab::EncryptedBitstream bs;
  std::vector<Word> plain;  // region plaintext as built
};

Case makeCase(std::uint64_t seed, cfglab::DeviceModel model = cfglab::DeviceModel::Series7,
              std::size_t minFabric = 64, std::size_t maxFabric = 512);

Block128 randomBlock(std::mt19937_64& rng);

}  // namespace ref
