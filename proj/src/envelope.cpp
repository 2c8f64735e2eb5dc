#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "cfglab/crypto.hpp"
#include "cfglab/error.hpp"

namespace cfglab {

std::array<Word, 8> HmacKey::words() const {
  std::array<Word, 8> out{};
  for (int i = 0; i < 8; ++i) out[i] = loadBigEndian(bytes.data() + 4 * i);
  return out;
}

HmacKey HmacKey::fromWords(std::span<const Word, 8> words) {
  HmacKey k;
  for (int i = 0; i < 8; ++i) storeBigEndian(words[i], k.bytes.data() + 4 * i);
  return k;
}

std::vector<Word> HmacEnvelope::footerWords() const {
  std::vector<Word> out;
  out.reserve(kFooterWords);
  out.insert(out.end(), opadChunk.begin(), opadChunk.end());
  out.insert(out.end(), alignment.begin(), alignment.end());
  out.insert(out.end(), tag.begin(), tag.end());
  return out;
}

namespace {

// The 256-bit key is zero-padded to the 512-bit block, so words 9..16 of
// each chunk are the bare pad constant.
std::array<Word, kChunkWords> keyChunk(const HmacKey& kh, Word pad) {
  std::array<Word, kChunkWords> chunk{};
  const auto kw = kh.words();
  for (std::size_t i = 0; i < kChunkWords; ++i) {
    chunk[i] = (i < 8 ? kw[i] : 0) ^ pad;
  }
  return chunk;
}

Tag digestToTag(const Sha256::Digest& d) {
  Tag t{};
  for (std::size_t i = 0; i < kTagWords; ++i) t[i] = loadBigEndian(d.data() + 4 * i);
  return t;
}

}  // namespace

Tag tagFromChunks(std::span<const Word, kHeaderChunkWords> headerChunk,
                  std::span<const Word> message,
                  std::span<const Word, kChunkWords> opadChunk) {
  Sha256 inner;
  inner.update(std::span<const Word>(headerChunk));
  inner.update(message);
  const auto innerDigest = inner.finish();

  Sha256 outer;
  outer.update(std::span<const Word>(opadChunk));
  outer.update(std::span<const std::uint8_t>(innerDigest));
  return digestToTag(outer.finish());
}

Tag computeTag(const HmacKey& kh, std::span<const Word> message) {
  const auto ipad = keyChunk(kh, kIpadWord);
  const auto opad = keyChunk(kh, kOpadWord);
  return tagFromChunks(ipad, message, opad);
}

HmacEnvelope buildEnvelope(const HmacKey& kh, const Tag& tag) {
  HmacEnvelope env;
  env.headerChunk = keyChunk(kh, kIpadWord);
  env.opadChunk = keyChunk(kh, kOpadWord);
  env.tag = tag;
  return env;
}

ParsedEnvelope parseEnvelope(std::span<const Word> headerChunk,
                             std::span<const Word> footer) {
  if (headerChunk.size() != kHeaderChunkWords || footer.size() != kFooterWords) {
    throw Error(ErrorCode::MalformedInput, "envelope has the wrong size");
  }
  for (std::size_t i = 8; i < kChunkWords; ++i) {
    if (headerChunk[i] != kIpadWord) {
      throw Error(ErrorCode::FillerMismatch,
                  fmt::format("ipad filler word {} is 0x{:08X}", i + 1, headerChunk[i]));
    }
    if (footer[i] != kOpadWord) {
      throw Error(ErrorCode::FillerMismatch,
                  fmt::format("opad filler word {} is 0x{:08X}", i + 1, footer[i]));
    }
  }
  std::array<Word, 8> kw{};
  for (std::size_t i = 0; i < 8; ++i) {
    kw[i] = headerChunk[i] ^ kIpadWord;
    if ((footer[i] ^ kOpadWord) != kw[i]) {
      throw Error(ErrorCode::FillerMismatch,
                  fmt::format("ipad and opad key copies differ at word {}", i + 1));
    }
  }
  ParsedEnvelope out;
  out.key = HmacKey::fromWords(kw);
  std::copy(footer.end() - kTagWords, footer.end(), out.tag.begin());
  return out;
}

std::array<std::uint8_t, 32> parseKeyHex(const std::string& text) {
  std::string digits;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    if (!std::isxdigit(static_cast<unsigned char>(c))) {
      throw Error(ErrorCode::MalformedInput,
                  fmt::format("key file contains non-hex character '{}'", c));
    }
    digits.push_back(c);
  }
  if (digits.size() != 64) {
    throw Error(ErrorCode::MalformedInput,
                fmt::format("key needs 64 hex digits, got {}", digits.size()));
  }
  std::array<std::uint8_t, 32> key{};
  for (std::size_t i = 0; i < 32; ++i) {
    key[i] = static_cast<std::uint8_t>(std::stoul(digits.substr(2 * i, 2), nullptr, 16));
  }
  return key;
}

std::string formatKeyHex(std::span<const std::uint8_t, 32> key) {
  std::string out;
  for (auto b : key) out += fmt::format("{:02x}", b);
  return out;
}

namespace {

std::array<std::uint8_t, 32> readKeyFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open key file {}", path));
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parseKeyHex(text);
}

}  // namespace

AesKey256 readAesKeyFile(const std::string& path) { return AesKey256{readKeyFile(path)}; }

HmacKey readHmacKeyFile(const std::string& path) { return HmacKey{readKeyFile(path)}; }

void writeKeyFile(const std::string& path, std::span<const std::uint8_t, 32> key) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, fmt::format("cannot write key file {}", path));
  out << formatKeyHex(key) << "\n";
}

}  // namespace cfglab
