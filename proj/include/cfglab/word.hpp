#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cfglab {

/// One configuration-bus word. On the wire and inside every hash or cipher
/// input it is serialized most-significant byte first.
using Word = std::uint32_t;

inline constexpr Word kSyncWord = 0xAA995566;
inline constexpr Word kNopWord = 0x20000000;
inline constexpr Word kDummyWord = 0xFFFFFFFF;
inline constexpr Word kBusWidthDetect1 = 0x000000BB;
inline constexpr Word kBusWidthDetect2 = 0x11220044;

inline void storeBigEndian(Word w, std::uint8_t* out) {
  out[0] = static_cast<std::uint8_t>(w >> 24);
  out[1] = static_cast<std::uint8_t>(w >> 16);
  out[2] = static_cast<std::uint8_t>(w >> 8);
  out[3] = static_cast<std::uint8_t>(w);
}

inline Word loadBigEndian(const std::uint8_t* in) {
  return (Word{in[0]} << 24) | (Word{in[1]} << 16) | (Word{in[2]} << 8) |
         Word{in[3]};
}

std::vector<std::uint8_t> wordsToBytes(std::span<const Word> words);

/// Throws Error(MalformedInput) if the byte count is not a multiple of 4.
std::vector<Word> bytesToWords(std::span<const std::uint8_t> bytes);

}  // namespace cfglab
