#include <doctest.h>

#include <algorithm>
#include <random>

#include "cfglab/attack.hpp"
#include "cfglab/error.hpp"
#include "oracle.hpp"

using namespace cfglab;

namespace {

constexpr auto kS = Interface::SelectMap;

struct Rig {
  ref::Case c;
  Device dev;
  DevicePort port;

  explicit Rig(ref::Case cs, Countermeasures cm = {})
      : c(std::move(cs)), dev(c.opts.model, cm), port(dev) {
    dev.loadKey(c.aes, KeyStorage::Bbram, Interface::Jtag);
  }
  OracleSession session(std::uint64_t seed = 1) {
    SessionOptions o;
    o.target = c.opts.model;
    o.seed = seed;
    return OracleSession(port, c.bs, o);
  }
};

ErrorCode codeOf(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::Io;
}

// ConfigPort that counts what goes through it.
class CountingPort final : public ConfigPort {
 public:
  explicit CountingPort(ConfigPort& inner) : inner_(inner) {}
  ProgramResult program(std::span<const Word> w) override {
    ++programs;
    return inner_.program(w);
  }
  Word readRegister(Reg r) override {
    ++reads;
    return inner_.readRegister(r);
  }
  void resetManual() override {
    ++resets;
    inner_.resetManual();
  }
  int programs = 0, reads = 0, resets = 0;

 private:
  ConfigPort& inner_;
};

}  // namespace

TEST_CASE("one word matches the reference decryption") {
  Rig r(ref::makeCase(41));
  auto s = r.session();
  const auto truth = ref::decryptRegion(r.c.aes, r.c.bs);
  for (std::size_t t : {std::size_t{1}, std::size_t{5}, std::size_t{20}, r.c.bs.blockCount}) {
    CHECK(s.recoverWord(t, 4) == truth[4 * (t - 1) + 3]);
  }
}

TEST_CASE("words must be recovered from the back of a block") {
  Rig r(ref::makeCase(42));
  auto s = r.session();
  CHECK(codeOf([&] { s.recoverWord(9, 3); }) == ErrorCode::OrderingViolation);
  CHECK(codeOf([&] { s.recoverWord(0, 4); }) == ErrorCode::BlockOutOfRange);
  CHECK(codeOf([&] { s.recoverWord(r.c.bs.blockCount + 1, 4); }) == ErrorCode::BlockOutOfRange);
}

TEST_CASE("a block costs four queries after calibration") {
  Rig r(ref::makeCase(43));
  auto s = r.session();
  CountingPort cp(r.port);
  OracleSession counted(cp, r.c.bs);
  counted.recoverWord(9, 4);  // calibration + 1
  const auto q0 = counted.queryCount();
  CHECK(q0 == 2);
  const auto b = counted.recoverBlock(5);
  CHECK(counted.queryCount() - q0 == 4);
  // Known structure of the config header's first block.
  CHECK(b.w == std::array<Word, 4>{0x30022001, 0x00000000, 0x30020001, 0x00000000});
  // Two bitstreams, one read and one reset per query.
  CHECK(cp.programs == 2 * static_cast<int>(counted.queryCount()));
  CHECK(cp.reads == static_cast<int>(counted.queryCount()));
  CHECK(cp.resets == static_cast<int>(counted.queryCount()));
  // Ledger hits are free.
  counted.recoverBlock(5);
  CHECK(counted.queryCount() - q0 == 4);
}

TEST_CASE("full recovery equals the reference plaintext") {
  for (std::uint64_t seed : {44u, 45u, 46u}) {
    Rig r(ref::makeCase(seed));
    auto s = r.session();
    const auto rec = s.recoverBitstream();
    CHECK(rec.words == ref::decryptRegion(r.c.aes, r.c.bs));
    CHECK(rec.words == r.c.plain);
    CHECK(std::all_of(rec.masks.begin(), rec.masks.end(), [](Word m) { return m == 0; }));
    CHECK(s.queryCount() == r.c.bs.encWords());  // calibration word is reused
    // The original bitstream still configures the device afterwards.
    r.dev.resetManual(kS);
    CHECK(r.dev.program(r.c.bs.words, kS).status == ProgramStatus::Success);
  }
}

TEST_CASE("Virtex-6 recovery is exact on the low 30 bits") {
  Rig r(ref::makeCase(47, DeviceModel::Virtex6));
  auto s = r.session();
  CHECK(s.unknownMask() == 0xC0000000);
  const auto rec = s.recoverBitstream();
  const auto truth = ref::decryptRegion(r.c.aes, r.c.bs);
  REQUIRE(rec.words.size() == truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    CHECK(rec.words[i] == (truth[i] & 0x3FFFFFFF));
    CHECK(rec.masks[i] == 0xC0000000);
  }
  CHECK(codeOf([&] { s.forgeEncrypt(std::vector<Block128>(1)); }) == ErrorCode::MalformedInput);
}

TEST_CASE("WBSTAR read of 0xFFFFFFFF on Virtex-6") {
  ref::Case c = ref::makeCase(48, DeviceModel::Virtex6, 64, 64);
  c.opts.fabricPayload.assign(64, 0xFFFFFFFF);
  c.bs = buildEncrypted(c.opts, c.aes, c.hmac);
  Rig r(c);
  auto s = r.session();
  CHECK(s.recoverWord(9, 4) == 0x3FFFFFFF);
}

// Property: the oracle is XOR-linear in the chain block.
TEST_CASE("oracle decryption and its linearity") {
  Rig r(ref::makeCase(49));
  auto s = r.session();
  std::mt19937_64 rng(9);
  for (int i = 0; i < 6; ++i) {
    const Block128 c = ref::randomBlock(rng);
    const Block128 x = ref::randomBlock(rng);
    const Block128 d = ref::decryptBlock(r.c.aes, c);
    CHECK(s.oracleDecryptBlock(c, Block128{}) == d);
    CHECK(s.oracleDecryptBlock(c, x) == (d ^ x));
  }
}

TEST_CASE("forged ciphertext decrypts to the chosen plaintext") {
  Rig r(ref::makeCase(50));
  auto s = r.session();
  std::mt19937_64 rng(10);
  std::vector<Block128> want(5);
  for (auto& b : want) b = ref::randomBlock(rng);
  const auto f = s.forgeEncrypt(want);
  CHECK(cbcDecrypt(r.c.aes, f.iv, f.cipher) == want);
  CHECK(s.queryCount() == 1 + 4 * want.size());
}

TEST_CASE("forged bitstream is accepted and a flipped bit is not") {
  Rig r(ref::makeCase(51));
  auto s = r.session();
  BuildOptions o;
  o.fabricPayload.assign(20, 0);
  for (std::size_t i = 0; i < 20; ++i) o.fabricPayload[i] = 0xC0FFEE00u + static_cast<Word>(i);
  o.wbstarValue = 0x00001234;
  const auto body = buildBody(o);
  const auto forged = s.forgeBitstream(body);

  Device fresh(DeviceModel::Series7);
  fresh.loadKey(r.c.aes, KeyStorage::Bbram, Interface::Jtag);
  const auto res = fresh.program(forged.words, kS);
  CHECK(res.status == ProgramStatus::Success);
  const auto f = fresh.committedFabric();
  CHECK(std::vector<Word>(f.begin(), f.end()) == o.fabricPayload);
  CHECK(fresh.readRegister(Reg::WBSTAR, kS) == 0x00001234);

  auto flipped = forged;
  flipped.words[flipped.encStart + 4 * 10 + 1] ^= 0x100;
  fresh.resetManual(kS);
  CHECK(fresh.program(flipped.words, kS).status == ProgramStatus::HmacMismatch);

  CHECK(codeOf([&] { s.forgeBitstream(std::vector<Word>(17, kNopWord)); }) ==
        ErrorCode::MalformedInput);
}

TEST_CASE("partial forgery changes fabric words and keeps the rest") {
  Rig r(ref::makeCase(52, DeviceModel::Series7, 200, 200));
  auto s = r.session();
  const auto rec = s.recoverBitstream();
  auto mod = rec.words;
  const std::size_t fabric0 = 16 + kConfigHeaderWords;
  mod[fabric0 + 100] ^= 0x00FF00FF;
  mod[fabric0 + 105] = 0x12345678;

  const auto q0 = s.queryCount();
  const auto p = s.forgePartial(rec.words, mod);
  CHECK(p.chainBlock == (fabric0 + 100) / 4);
  CHECK(s.queryCount() - q0 == 4 * p.oracleBlocks);
  CHECK(p.oracleBlocks < 10);
  CHECK(ref::decryptRegion(r.c.aes, p.bitstream) == p.plaintext);

  r.dev.resetManual(kS);
  CHECK(r.dev.program(p.bitstream.words, kS).status == ProgramStatus::Success);
  const auto f = r.dev.committedFabric();
  CHECK(f[100] == (r.c.opts.fabricPayload[100] ^ 0x00FF00FF));
  CHECK(f[105] == 0x12345678);
  for (std::size_t i = 0; i < f.size(); ++i) {
    if ((fabric0 + i) / 4 == p.chainBlock - 1) continue;  // sacrificed block
    if (i == 100 || i == 105) continue;
    CHECK(f[i] == r.c.opts.fabricPayload[i]);
  }

  auto header = rec.words;
  header[20] ^= 1;
  CHECK(codeOf([&] { s.forgePartial(rec.words, header); }) == ErrorCode::BlockOutOfRange);
  auto envelope = rec.words;
  envelope[2] ^= 1;
  CHECK(codeOf([&] { s.forgePartial(rec.words, envelope); }) == ErrorCode::BlockOutOfRange);
}

TEST_CASE("parallel recovery over two devices") {
  const auto c = ref::makeCase(53);
  Device d1(DeviceModel::Series7), d2(DeviceModel::Series7);
  d1.loadKey(c.aes, KeyStorage::Bbram, Interface::Jtag);
  d2.loadKey(c.aes, KeyStorage::Bbram, Interface::Jtag);
  DevicePort p1(d1), p2(d2);
  std::vector<ConfigPort*> ports{&p1, &p2};
  std::size_t q = 0;
  const auto l = recoverParallel(ports, c.bs, {}, &q);
  CHECK(recoveryFromLedger(l, c.bs.blockCount).words == c.plain);
  CHECK(q == c.bs.encWords() + 1);  // second session calibrates too

  Rig single(c);
  auto s = single.session();
  s.recoverBitstream();
  CHECK(s.ledger() == l);
}

TEST_CASE("resuming from a ledger skips known words") {
  Rig r(ref::makeCase(54));
  auto a = r.session();
  a.recoverRange(1, 10);
  const auto partial = RecoveryLedger::fromText(a.ledger().toText());

  r.dev.resetManual(kS);
  auto b = r.session(7);
  b.adoptLedger(partial);
  const auto rec = b.recoverBitstream();
  CHECK(rec.words == r.c.plain);
  // A new session calibrates once before its first real query.
  CHECK(b.queryCount() == r.c.bs.encWords() - 40 + 1);

  RecoveryLedger wrong;
  wrong.record({5, 1, 0xBAD, 0});
  CHECK(codeOf([&] { b.adoptLedger(wrong); }) == ErrorCode::LedgerConflict);
}

TEST_CASE("delta patch is an involution") {
  const auto c = ref::makeCase(55);
  std::mt19937_64 rng(12);
  for (int i = 0; i < 100; ++i) {
    auto bs = c.bs;
    const DeltaPatch p{rng() % (bs.blockCount + 1), static_cast<int>(1 + rng() % 4),
                       static_cast<Word>(rng())};
    p.apply(bs);
    p.apply(bs);
    CHECK(bs.words == c.bs.words);
  }
  auto bs = c.bs;
  DeltaPatch{0, 2, 0xF0}.apply(bs);
  CHECK(bs.iv().w[1] == (c.bs.iv().w[1] ^ 0xF0));
}

// Property: within the attack chunk (region words below 32) nothing but NOPs
// executes after the stretched WBSTAR write.
TEST_CASE("no packet runs after the leaked word, every (t, j)") {
  const auto c = ref::makeCase(56, DeviceModel::Series7, 64, 64);
  const auto truth = ref::decryptRegion(c.aes, c.bs);
  int violations = 0;
  for (std::size_t t = 1; t <= c.bs.blockCount; ++t) {
    for (int j = 4; j >= 1; --j) {
      std::vector<Word> trailing(truth.begin() + 4 * (t - 1) + j, truth.begin() + 4 * t);
      Device d(DeviceModel::Series7);
      d.loadKey(c.aes, KeyStorage::Bbram, Interface::Jtag);
      d.transcript().setEnabled(true);
      const auto words = buildMalicious(c.bs, t, j, std::span<const Word>(trailing));
      if (d.program(words, kS).status != ProgramStatus::HmacMismatch) ++violations;
      const auto& l = d.transcript().lines();
      const auto w = std::find_if(l.begin(), l.end(), [](const std::string& s) {
        return s.rfind("write WBSTAR", 0) == 0;
      });
      const auto h = std::find(l.begin(), l.end(), "hmac mismatch");
      if (w == l.end() || h == l.end()) {
        ++violations;
        continue;
      }
      for (auto it = w + 1; it != h; ++it) {
        if (it->rfind("packet enc:", 0) != 0) continue;
        const std::size_t at = std::stoul(it->substr(11));
        if (at < 32 && it->find("NOP") == std::string::npos) ++violations;
      }
      if (d.readRegister(Reg::WBSTAR, kS) != truth[4 * (t - 1) + j - 1]) ++violations;
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("defended devices") {
  const auto c = ref::makeCase(57);

  Rig guarded(c, Countermeasures{true, std::nullopt});
  auto g = guarded.session();
  CHECK(codeOf([&] { g.recoverWord(9, 4); }) == ErrorCode::OracleDefended);

  Countermeasures trap;
  trap.rsTrap = RsTrapConfig{};
  Rig trapped(c, trap);
  auto t = trapped.session();
  // Random fabric words sooner or later carry the trigger pattern.
  bool fired = false;
  try {
    t.recoverBitstream();
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OracleDefended);
    fired = true;
  }
  REQUIRE(fired);
  {
    CHECK(trapped.dev.trapFired());
    CHECK_FALSE(trapped.dev.hasKey());
    auto again = trapped.session(2);
    CHECK(codeOf([&] { again.recoverWord(9, 4); }) == ErrorCode::NoKeyLoaded);
  }

  Device empty(DeviceModel::Series7);
  DevicePort ep(empty);
  OracleSession e(ep, c.bs);
  CHECK(codeOf([&] { e.recoverWord(9, 4); }) == ErrorCode::NoKeyLoaded);
}

TEST_CASE("RS trap fires on a word with the trigger pattern") {
  ref::Case c = ref::makeCase(58, DeviceModel::Series7, 64, 64);
  c.opts.fabricPayload[0] = 0xE0000000;
  for (int i = 1; i < 4; ++i) c.opts.fabricPayload[i] = 0x00000100u * i;
  c.bs = buildEncrypted(c.opts, c.aes, c.hmac);
  Countermeasures trap;
  trap.rsTrap = RsTrapConfig{};
  Rig r(c, trap);
  auto s = r.session();
  const std::size_t t = (16 + kConfigHeaderWords) / 4 + 1;  // first fabric block
  s.recoverWord(t, 4);
  s.recoverWord(t, 3);
  s.recoverWord(t, 2);
  CHECK(codeOf([&] { s.recoverWord(t, 1); }) == ErrorCode::OracleDefended);
  CHECK_FALSE(r.dev.hasKey());
}

TEST_CASE("the attack reaches the device only through its port") {
  const auto c = ref::makeCase(59);
  Device d(DeviceModel::Series7);
  d.loadKey(c.aes, KeyStorage::Bbram, Interface::Jtag);
  DevicePort port(d);
  CountingPort cp(port);
  OracleSession s(cp, c.bs);
  s.recoverBlock(9);
  // The session never learned the key or read the fabric: every effect it
  // had is accounted for by the counted port calls.
  CHECK(cp.programs == static_cast<int>(s.programCount()));
  CHECK(cp.reads == static_cast<int>(s.queryCount()));
}

TEST_CASE("lockdown on the target costs one extra reset") {
  Rig r(ref::makeCase(60));
  REQUIRE(r.dev.program(r.c.bs.words, kS).status == ProgramStatus::Success);
  auto s = r.session();
  CHECK(s.recoverWord(9, 4) == r.c.plain[35]);
  CHECK(s.programCount() == 2 * s.queryCount() + 1);
}
