#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cfglab/word.hpp"

namespace cfglab {

/// 128-bit cipher block as four words in transmission order (word 1 first).
struct Block128 {
  std::array<Word, 4> w{};

  static Block128 fromBytes(std::span<const std::uint8_t, 16> bytes);
  std::array<std::uint8_t, 16> toBytes() const;

  Block128& operator^=(const Block128& o) {
    for (int i = 0; i < 4; ++i) w[i] ^= o.w[i];
    return *this;
  }
  friend Block128 operator^(Block128 a, const Block128& b) { return a ^= b; }
  friend bool operator==(const Block128&, const Block128&) = default;
};

std::vector<Block128> wordsToBlocks(std::span<const Word> words);  // size % 4 == 0
std::vector<Word> blocksToWords(std::span<const Block128> blocks);

struct AesKey256 {
  std::array<std::uint8_t, 32> bytes{};
  friend bool operator==(const AesKey256&, const AesKey256&) = default;
};

struct HmacKey {
  std::array<std::uint8_t, 32> bytes{};
  friend bool operator==(const HmacKey&, const HmacKey&) = default;

  std::array<Word, 8> words() const;
  static HmacKey fromWords(std::span<const Word, 8> words);
};

// ---------------------------------------------------------------------------
// AES-256 (FIPS-197), one block at a time. The key schedule is expanded once.
class Aes256 {
 public:
  explicit Aes256(const AesKey256& key);

  void encryptBlock(const std::uint8_t in[16], std::uint8_t out[16]) const;
  void decryptBlock(const std::uint8_t in[16], std::uint8_t out[16]) const;

  Block128 encrypt(const Block128& p) const;
  Block128 decrypt(const Block128& c) const;

 private:
  std::array<std::uint32_t, 60> roundKeys_{};
};

Block128 aesEncryptBlock(const AesKey256& k, const Block128& p);
Block128 aesDecryptBlock(const AesKey256& k, const Block128& c);

std::vector<Block128> cbcEncrypt(const AesKey256& k, const Block128& iv,
                                 std::span<const Block128> plain);
std::vector<Block128> cbcDecrypt(const AesKey256& k, const Block128& iv,
                                 std::span<const Block128> cipher);

// ---------------------------------------------------------------------------
// SHA-256 (FIPS 180-4), streaming.
class Sha256 {
 public:
  using Digest = std::array<std::uint8_t, 32>;

  Sha256();
  void update(std::span<const std::uint8_t> data);
  void update(std::span<const Word> words);
  Digest finish();

  static Digest hash(std::span<const std::uint8_t> data);

 private:
  void compress(const std::uint8_t block[64]);

  std::array<std::uint32_t, 8> state_;
  std::array<std::uint8_t, 64> buffer_{};
  std::size_t buffered_ = 0;
  std::uint64_t totalBytes_ = 0;
};

// ---------------------------------------------------------------------------
// MAC-then-encrypt envelope. The HMAC key travels inside the encrypted region
// as ready-made first compression blocks for the inner and outer hash.

inline constexpr Word kIpadWord = 0x36363636;
inline constexpr Word kOpadWord = 0x5C5C5C5C;
inline constexpr std::size_t kChunkWords = 16;       // one SHA-256 block
inline constexpr std::size_t kHeaderChunkWords = 16;
inline constexpr std::size_t kAlignmentWords = 16;
inline constexpr std::size_t kTagWords = 8;
inline constexpr std::size_t kFooterWords = kChunkWords + kAlignmentWords + kTagWords;

using Tag = std::array<Word, kTagWords>;

struct HmacEnvelope {
  std::array<Word, kHeaderChunkWords> headerChunk{};  // (K || 0) ^ ipad
  std::array<Word, kChunkWords> opadChunk{};          // (K || 0) ^ opad
  std::array<Word, kAlignmentWords> alignment{};      // emitted as zeros
  Tag tag{};

  std::vector<Word> footerWords() const;  // opad chunk, alignment, tag
};

/// HMAC-SHA-256 over the big-endian bytes of message.
Tag computeTag(const HmacKey& kh, std::span<const Word> message);

/// Tag as the engine derives it from whatever chunks arrived in the stream:
/// SHA256(opadChunk || SHA256(headerChunk || message)).
Tag tagFromChunks(std::span<const Word, kHeaderChunkWords> headerChunk,
                  std::span<const Word> message,
                  std::span<const Word, kChunkWords> opadChunk);

HmacEnvelope buildEnvelope(const HmacKey& kh, const Tag& tag);

struct ParsedEnvelope {
  HmacKey key;
  Tag tag;
};

/// headerChunk: 16 words; footer: the 40 HMAC footer words. Throws
/// FillerMismatch if the ipad/opad filler words or the two key copies
/// disagree.
ParsedEnvelope parseEnvelope(std::span<const Word> headerChunk,
                             std::span<const Word> footer);

// ---------------------------------------------------------------------------
// Key files: 64 hex characters, whitespace allowed anywhere.
std::array<std::uint8_t, 32> parseKeyHex(const std::string& text);
std::string formatKeyHex(std::span<const std::uint8_t, 32> key);
AesKey256 readAesKeyFile(const std::string& path);
HmacKey readHmacKeyFile(const std::string& path);
void writeKeyFile(const std::string& path, std::span<const std::uint8_t, 32> key);

}  // namespace cfglab
