#include <cstring>

#include "cfglab/crypto.hpp"
#include "cfglab/error.hpp"

namespace cfglab {

namespace {

constexpr std::uint8_t kSbox[256] = {
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b,
    0xfe, 0xd7, 0xab, 0x76, 0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0,
    0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0, 0xb7, 0xfd, 0x93, 0x26,
    0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2,
    0xeb, 0x27, 0xb2, 0x75, 0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0,
    0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84, 0x53, 0xd1, 0x00, 0xed,
    0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f,
    0x50, 0x3c, 0x9f, 0xa8, 0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5,
    0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2, 0xcd, 0x0c, 0x13, 0xec,
    0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14,
    0xde, 0x5e, 0x0b, 0xdb, 0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c,
    0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79, 0xe7, 0xc8, 0x37, 0x6d,
    0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f,
    0x4b, 0xbd, 0x8b, 0x8a, 0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e,
    0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e, 0xe1, 0xf8, 0x98, 0x11,
    0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f,
    0xb0, 0x54, 0xbb, 0x16,
};

struct InverseSbox {
  std::uint8_t t[256];
  constexpr InverseSbox() : t{} {
    for (int i = 0; i < 256; ++i) t[kSbox[i]] = static_cast<std::uint8_t>(i);
  }
};
constexpr InverseSbox kInvSbox;

constexpr std::uint8_t xtime(std::uint8_t x) {
  return static_cast<std::uint8_t>((x << 1) ^ ((x & 0x80) ? 0x1b : 0x00));
}

constexpr std::uint8_t gmul(std::uint8_t a, std::uint8_t b) {
  std::uint8_t r = 0;
  while (b) {
    if (b & 1) r ^= a;
    a = xtime(a);
    b >>= 1;
  }
  return r;
}

std::uint32_t subWord(std::uint32_t w) {
  return (std::uint32_t{kSbox[w >> 24]} << 24) |
         (std::uint32_t{kSbox[(w >> 16) & 0xff]} << 16) |
         (std::uint32_t{kSbox[(w >> 8) & 0xff]} << 8) | kSbox[w & 0xff];
}

// State is kept column-major in 16 bytes, exactly as the input block.
void addRoundKey(std::uint8_t s[16], const std::uint32_t* rk) {
  for (int c = 0; c < 4; ++c) {
    s[4 * c + 0] ^= static_cast<std::uint8_t>(rk[c] >> 24);
    s[4 * c + 1] ^= static_cast<std::uint8_t>(rk[c] >> 16);
    s[4 * c + 2] ^= static_cast<std::uint8_t>(rk[c] >> 8);
    s[4 * c + 3] ^= static_cast<std::uint8_t>(rk[c]);
  }
}

void subBytes(std::uint8_t s[16]) {
  for (int i = 0; i < 16; ++i) s[i] = kSbox[s[i]];
}

void invSubBytes(std::uint8_t s[16]) {
  for (int i = 0; i < 16; ++i) s[i] = kInvSbox.t[s[i]];
}

void shiftRows(std::uint8_t s[16]) {
  std::uint8_t t[16];
  for (int c = 0; c < 4; ++c)
    for (int r = 0; r < 4; ++r) t[4 * c + r] = s[4 * ((c + r) % 4) + r];
  std::memcpy(s, t, 16);
}

void invShiftRows(std::uint8_t s[16]) {
  std::uint8_t t[16];
  for (int c = 0; c < 4; ++c)
    for (int r = 0; r < 4; ++r) t[4 * ((c + r) % 4) + r] = s[4 * c + r];
  std::memcpy(s, t, 16);
}

void mixColumns(std::uint8_t s[16]) {
  for (int c = 0; c < 4; ++c) {
    std::uint8_t* col = s + 4 * c;
    const std::uint8_t a0 = col[0], a1 = col[1], a2 = col[2], a3 = col[3];
    col[0] = static_cast<std::uint8_t>(xtime(a0) ^ (xtime(a1) ^ a1) ^ a2 ^ a3);
    col[1] = static_cast<std::uint8_t>(a0 ^ xtime(a1) ^ (xtime(a2) ^ a2) ^ a3);
    col[2] = static_cast<std::uint8_t>(a0 ^ a1 ^ xtime(a2) ^ (xtime(a3) ^ a3));
    col[3] = static_cast<std::uint8_t>((xtime(a0) ^ a0) ^ a1 ^ a2 ^ xtime(a3));
  }
}

void invMixColumns(std::uint8_t s[16]) {
  for (int c = 0; c < 4; ++c) {
    std::uint8_t* col = s + 4 * c;
    const std::uint8_t a0 = col[0], a1 = col[1], a2 = col[2], a3 = col[3];
    col[0] = gmul(a0, 14) ^ gmul(a1, 11) ^ gmul(a2, 13) ^ gmul(a3, 9);
    col[1] = gmul(a0, 9) ^ gmul(a1, 14) ^ gmul(a2, 11) ^ gmul(a3, 13);
    col[2] = gmul(a0, 13) ^ gmul(a1, 9) ^ gmul(a2, 14) ^ gmul(a3, 11);
    col[3] = gmul(a0, 11) ^ gmul(a1, 13) ^ gmul(a2, 9) ^ gmul(a3, 14);
  }
}

constexpr int kRounds = 14;

}  // namespace

Aes256::Aes256(const AesKey256& key) {
  for (int i = 0; i < 8; ++i) roundKeys_[i] = loadBigEndian(key.bytes.data() + 4 * i);
  std::uint8_t rcon = 0x01;
  for (int i = 8; i < 60; ++i) {
    std::uint32_t t = roundKeys_[i - 1];
    if (i % 8 == 0) {
      t = subWord((t << 8) | (t >> 24)) ^ (std::uint32_t{rcon} << 24);
      rcon = xtime(rcon);
    } else if (i % 8 == 4) {
      t = subWord(t);
    }
    roundKeys_[i] = roundKeys_[i - 8] ^ t;
  }
}

void Aes256::encryptBlock(const std::uint8_t in[16], std::uint8_t out[16]) const {
  std::uint8_t s[16];
  std::memcpy(s, in, 16);
  addRoundKey(s, roundKeys_.data());
  for (int round = 1; round < kRounds; ++round) {
    subBytes(s);
    shiftRows(s);
    mixColumns(s);
    addRoundKey(s, roundKeys_.data() + 4 * round);
  }
  subBytes(s);
  shiftRows(s);
  addRoundKey(s, roundKeys_.data() + 4 * kRounds);
  std::memcpy(out, s, 16);
}

void Aes256::decryptBlock(const std::uint8_t in[16], std::uint8_t out[16]) const {
  std::uint8_t s[16];
  std::memcpy(s, in, 16);
  addRoundKey(s, roundKeys_.data() + 4 * kRounds);
  for (int round = kRounds - 1; round > 0; --round) {
    invShiftRows(s);
    invSubBytes(s);
    addRoundKey(s, roundKeys_.data() + 4 * round);
    invMixColumns(s);
  }
  invShiftRows(s);
  invSubBytes(s);
  addRoundKey(s, roundKeys_.data());
  std::memcpy(out, s, 16);
}

Block128 Aes256::encrypt(const Block128& p) const {
  const auto in = p.toBytes();
  std::array<std::uint8_t, 16> out{};
  encryptBlock(in.data(), out.data());
  return Block128::fromBytes(out);
}

Block128 Aes256::decrypt(const Block128& c) const {
  const auto in = c.toBytes();
  std::array<std::uint8_t, 16> out{};
  decryptBlock(in.data(), out.data());
  return Block128::fromBytes(out);
}

Block128 aesEncryptBlock(const AesKey256& k, const Block128& p) {
  return Aes256(k).encrypt(p);
}

Block128 aesDecryptBlock(const AesKey256& k, const Block128& c) {
  return Aes256(k).decrypt(c);
}

std::vector<Block128> cbcEncrypt(const AesKey256& k, const Block128& iv,
                                 std::span<const Block128> plain) {
  const Aes256 aes(k);
  std::vector<Block128> out;
  out.reserve(plain.size());
  Block128 prev = iv;
  for (const auto& p : plain) {
    prev = aes.encrypt(p ^ prev);
    out.push_back(prev);
  }
  return out;
}

std::vector<Block128> cbcDecrypt(const AesKey256& k, const Block128& iv,
                                 std::span<const Block128> cipher) {
  const Aes256 aes(k);
  std::vector<Block128> out;
  out.reserve(cipher.size());
  Block128 prev = iv;
  for (const auto& c : cipher) {
    out.push_back(aes.decrypt(c) ^ prev);
    prev = c;
  }
  return out;
}

Block128 Block128::fromBytes(std::span<const std::uint8_t, 16> bytes) {
  Block128 b;
  for (int i = 0; i < 4; ++i) b.w[i] = loadBigEndian(bytes.data() + 4 * i);
  return b;
}

std::array<std::uint8_t, 16> Block128::toBytes() const {
  std::array<std::uint8_t, 16> out{};
  for (int i = 0; i < 4; ++i) storeBigEndian(w[i], out.data() + 4 * i);
  return out;
}

std::vector<Block128> wordsToBlocks(std::span<const Word> words) {
  if (words.size() % 4 != 0) {
    throw Error(ErrorCode::MalformedInput, "word count is not a whole number of blocks");
  }
  std::vector<Block128> out(words.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (int j = 0; j < 4; ++j) out[i].w[j] = words[4 * i + j];
  }
  return out;
}

std::vector<Word> blocksToWords(std::span<const Block128> blocks) {
  std::vector<Word> out;
  out.reserve(blocks.size() * 4);
  for (const auto& b : blocks) out.insert(out.end(), b.w.begin(), b.w.end());
  return out;
}

}  // namespace cfglab
