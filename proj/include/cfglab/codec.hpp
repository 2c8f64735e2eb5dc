#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfglab/word.hpp"

namespace cfglab {

enum class HeaderType : std::uint8_t { Type1 = 1, Type2 = 2 };

// Opcode 0b11 is reserved by the bus; it is kept so captured words round-trip.
enum class Opcode : std::uint8_t { Nop = 0, Read = 1, Write = 2, Reserved = 3 };

/// Configuration register address (14 bits). Addresses outside the catalog
/// are valid values of this type; see isKnown().
enum class Reg : std::uint16_t {
  CRC = 0x00,
  FAR = 0x01,
  FDRI = 0x02,
  FDRO = 0x03,
  CMD = 0x04,
  STAT = 0x07,
  CBC = 0x0B,
  IDCODE = 0x0C,
  WBSTAR = 0x10,
  TIMER = 0x11,
  BOOTSTS = 0x16,
  DWC = 0x1A,
};

inline constexpr std::uint16_t kRegAddressMask = 0x3FFF;
inline constexpr std::uint32_t kType1CountMax = 0x7FF;
inline constexpr std::uint32_t kType2CountMax = 0x7FFFFFF;

bool isKnown(Reg r);
/// "WBSTAR", or "UNKNOWN(0x1B1B)" for addresses outside the catalog.
std::string regName(Reg r);
/// Accepts catalog names, case-insensitive. Returns nullopt otherwise.
std::optional<Reg> parseRegName(const std::string& name);
std::span<const Reg> registerCatalog();

// CMD register codes used by the builders.
namespace cmd {
inline constexpr Word kNull = 0x00;
inline constexpr Word kWcfg = 0x01;
inline constexpr Word kRcfg = 0x04;
inline constexpr Word kStart = 0x05;
inline constexpr Word kDesync = 0x0D;
}  // namespace cmd

struct PacketHeader {
  HeaderType type = HeaderType::Type1;
  Opcode opcode = Opcode::Nop;
  Reg address = Reg::CRC;      // Type1 only
  std::uint32_t wordCount = 0; // 11 bits for Type1, 27 bits for Type2
  std::uint8_t reserved = 0;   // Type1 bits [12:11], kept verbatim

  friend bool operator==(const PacketHeader&, const PacketHeader&) = default;
};

struct Packet {
  PacketHeader header;
  std::vector<Word> payload;  // only Write packets carry payload

  friend bool operator==(const Packet&, const Packet&) = default;
};

/// Throws MalformedHeader unless bits [31:29] are 001 or 010.
PacketHeader decodeHeader(Word w);
/// Throws CountOverflow when wordCount does not fit the header's field.
Word encodeHeader(const PacketHeader& h);

PacketHeader type1(Opcode op, Reg r, std::uint32_t count);
PacketHeader type2(Opcode op, std::uint32_t count);
Packet writePacket(Reg r, std::vector<Word> payload);
Packet nopPacket();

std::optional<std::size_t> findSync(std::span<const Word> words);

struct Decoded {
  Packet packet;
  std::size_t next;  // index just past the packet
};

/// Decodes the packet starting at words[pos]. Throws MalformedHeader or
/// TruncatedPayload; never reads past header + declared payload.
Decoded decodePacket(std::span<const Word> words, std::size_t pos);

std::vector<Word> encodePacket(const Packet& p);
void appendPacket(std::vector<Word>& out, const Packet& p);

/// One step of a tolerant walk over a packet stream, as the configuration
/// engine sees it. Unlike decodePacket this never throws: bad headers become
/// Skip steps, payloads are clipped at the end of the span, and Type2 packets
/// resolve their register from the preceding Type1 header.
struct WalkStep {
  enum class Kind { Packet, Skip } kind = Kind::Skip;
  std::size_t offset = 0;          // header position within the span
  PacketHeader header;             // valid for Kind::Packet
  std::optional<Reg> target;       // effective register for reads and writes
  std::span<const Word> payload;   // Write payload, possibly clipped
  bool clipped = false;
  std::string note;                // why a word was skipped
};

class PacketWalker {
 public:
  explicit PacketWalker(std::span<const Word> words) : words_(words) {}

  bool done() const { return pos_ >= words_.size(); }
  std::size_t position() const { return pos_; }
  WalkStep next();

 private:
  std::span<const Word> words_;
  std::size_t pos_ = 0;
  // Register of the previous packet if it was a Type1 header with count 0.
  std::optional<Reg> type2Target_;
};

// Bitstream files: raw big-endian words, or hex text.
enum class FileFormat { Binary, HexText };

/// .hex and .txt are text, anything else binary.
FileFormat formatForPath(const std::string& path);

/// Parses one word per line ("AA995566" or "0xAA995566") and also the
/// four-bytes-per-line listing style ("0xAA, 0x99, 0x55, 0x66,"). Everything
/// after '#' is a comment. Throws MalformedInput.
std::vector<Word> parseHexText(const std::string& text);
std::string formatHexText(std::span<const Word> words);

std::vector<Word> readBitstreamFile(const std::string& path);
void writeBitstreamFile(const std::string& path, std::span<const Word> words);

}  // namespace cfglab
