#include "cfglab/codec.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include <fmt/format.h>

#include "cfglab/error.hpp"

namespace cfglab {

namespace {

constexpr std::array kCatalog = {
    Reg::CRC, Reg::FAR,    Reg::FDRI,  Reg::FDRO,    Reg::CMD,
    Reg::STAT, Reg::CBC,   Reg::IDCODE, Reg::WBSTAR, Reg::TIMER,
    Reg::BOOTSTS, Reg::DWC,
};

const char* catalogName(Reg r) {
  switch (r) {
    case Reg::CRC: return "CRC";
    case Reg::FAR: return "FAR";
    case Reg::FDRI: return "FDRI";
    case Reg::FDRO: return "FDRO";
    case Reg::CMD: return "CMD";
    case Reg::STAT: return "STAT";
    case Reg::CBC: return "CBC";
    case Reg::IDCODE: return "IDCODE";
    case Reg::WBSTAR: return "WBSTAR";
    case Reg::TIMER: return "TIMER";
    case Reg::BOOTSTS: return "BOOTSTS";
    case Reg::DWC: return "DWC";
  }
  return nullptr;
}

}  // namespace

bool isKnown(Reg r) {
  return std::find(kCatalog.begin(), kCatalog.end(), r) != kCatalog.end();
}

std::string regName(Reg r) {
  if (isKnown(r)) return catalogName(r);
  return fmt::format("UNKNOWN(0x{:04X})", static_cast<unsigned>(r));
}

std::optional<Reg> parseRegName(const std::string& name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  for (Reg r : kCatalog) {
    if (upper == catalogName(r)) return r;
  }
  return std::nullopt;
}

std::span<const Reg> registerCatalog() { return kCatalog; }

PacketHeader decodeHeader(Word w) {
  PacketHeader h;
  const unsigned kind = w >> 29;
  h.opcode = static_cast<Opcode>((w >> 27) & 0x3);
  if (kind == 0b001) {
    h.type = HeaderType::Type1;
    h.address = static_cast<Reg>((w >> 13) & kRegAddressMask);
    h.reserved = static_cast<std::uint8_t>((w >> 11) & 0x3);
    h.wordCount = w & kType1CountMax;
  } else if (kind == 0b010) {
    h.type = HeaderType::Type2;
    h.wordCount = w & kType2CountMax;
  } else {
    throw Error(ErrorCode::MalformedHeader,
                fmt::format("word 0x{:08X} is not a packet header", w));
  }
  return h;
}

Word encodeHeader(const PacketHeader& h) {
  const Word op = static_cast<Word>(h.opcode) & 0x3;
  if (h.type == HeaderType::Type1) {
    if (h.wordCount > kType1CountMax) {
      throw Error(ErrorCode::CountOverflow,
                  fmt::format("type1 word count {} exceeds 11 bits", h.wordCount));
    }
    return (Word{0b001} << 29) | (op << 27) |
           ((static_cast<Word>(h.address) & kRegAddressMask) << 13) |
           ((Word{h.reserved} & 0x3) << 11) | h.wordCount;
  }
  if (h.wordCount > kType2CountMax) {
    throw Error(ErrorCode::CountOverflow,
                fmt::format("type2 word count {} exceeds 27 bits", h.wordCount));
  }
  return (Word{0b010} << 29) | (op << 27) | h.wordCount;
}

PacketHeader type1(Opcode op, Reg r, std::uint32_t count) {
  return PacketHeader{HeaderType::Type1, op, r, count, 0};
}

PacketHeader type2(Opcode op, std::uint32_t count) {
  return PacketHeader{HeaderType::Type2, op, Reg::CRC, count, 0};
}

Packet writePacket(Reg r, std::vector<Word> payload) {
  Packet p;
  p.header = type1(Opcode::Write, r, static_cast<std::uint32_t>(payload.size()));
  p.payload = std::move(payload);
  return p;
}

Packet nopPacket() { return Packet{type1(Opcode::Nop, Reg::CRC, 0), {}}; }

std::optional<std::size_t> findSync(std::span<const Word> words) {
  auto it = std::find(words.begin(), words.end(), kSyncWord);
  if (it == words.end()) return std::nullopt;
  return static_cast<std::size_t>(it - words.begin());
}

Decoded decodePacket(std::span<const Word> words, std::size_t pos) {
  if (pos >= words.size()) {
    throw Error(ErrorCode::TruncatedPayload, "no header word at cursor");
  }
  Decoded d;
  d.packet.header = decodeHeader(words[pos]);
  std::size_t next = pos + 1;
  if (d.packet.header.opcode == Opcode::Write) {
    const std::size_t n = d.packet.header.wordCount;
    if (words.size() - next < n) {
      throw Error(ErrorCode::TruncatedPayload,
                  fmt::format("packet at {} declares {} words, {} remain", pos,
                              n, words.size() - next));
    }
    d.packet.payload.assign(words.begin() + next, words.begin() + next + n);
    next += n;
  }
  d.next = next;
  return d;
}

void appendPacket(std::vector<Word>& out, const Packet& p) {
  out.push_back(encodeHeader(p.header));
  out.insert(out.end(), p.payload.begin(), p.payload.end());
}

std::vector<Word> encodePacket(const Packet& p) {
  std::vector<Word> out;
  out.reserve(1 + p.payload.size());
  appendPacket(out, p);
  return out;
}

WalkStep PacketWalker::next() {
  WalkStep step;
  step.offset = pos_;
  const Word w = words_[pos_];
  const unsigned kind = w >> 29;
  if (kind != 0b001 && kind != 0b010) {
    step.note = fmt::format("malformed header 0x{:08X}", w);
    ++pos_;
    type2Target_.reset();
    return step;
  }

  step.kind = WalkStep::Kind::Packet;
  step.header = decodeHeader(w);
  ++pos_;

  const std::optional<Reg> resolvedType2 = type2Target_;
  type2Target_.reset();

  if (step.header.type == HeaderType::Type1) {
    step.target = step.header.address;
    if (step.header.wordCount == 0) type2Target_ = step.header.address;
  } else {
    step.target = resolvedType2;
    if (!resolvedType2) step.note = "type2 packet without preceding type1";
  }

  if (step.header.opcode == Opcode::Write) {
    const std::size_t avail = words_.size() - pos_;
    const std::size_t n = std::min<std::size_t>(step.header.wordCount, avail);
    step.clipped = n < step.header.wordCount;
    // An orphan Type2 write has no register; its payload is still consumed.
    step.payload = words_.subspan(pos_, n);
    pos_ += n;
  }
  return step;
}

}  // namespace cfglab
