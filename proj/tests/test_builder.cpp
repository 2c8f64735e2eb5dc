#include <doctest.h>

#include "cfglab/builder.hpp"
#include "cfglab/error.hpp"
#include "oracle.hpp"

using namespace cfglab;

namespace {

// Readout bitstream listing, four bytes per line.
constexpr const char* kReadoutListing = R"(
0xFF, 0xFF, 0xFF, 0xFF,
0xFF, 0xFF, 0xFF, 0xFF,
0xFF, 0xFF, 0xFF, 0xFF,
0xFF, 0xFF, 0xFF, 0xFF,
0xFF, 0xFF, 0xFF, 0xFF,
0xFF, 0xFF, 0xFF, 0xFF,
0x00, 0x00, 0x00, 0xBB,
0x11, 0x22, 0x00, 0x44,
0xFF, 0xFF, 0xFF, 0xFF,
0xFF, 0xFF, 0xFF, 0xFF,
0xAA, 0x99, 0x55, 0x66,
0x20, 0x00, 0x00, 0x00,
0x30, 0x00, 0x80, 0x01,
0x00, 0x00, 0x00, 0x04,
0x20, 0x00, 0x00, 0x00,
0x20, 0x00, 0x00, 0x00,
0x20, 0x00, 0x00, 0x00,
0x28, 0x02, 0x00, 0x01,
0x20, 0x00, 0x00, 0x00,
0x20, 0x00, 0x00, 0x00,
0x20, 0x00, 0x00, 0x00,
0x20, 0x00, 0x00, 0x00
)";

Block128 plainBlock(std::span<const Word> words, std::size_t t) {
  Block128 b;
  std::copy_n(words.begin() + 4 * (t - 1), 4, b.w.begin());
  return b;
}

ErrorCode codeOf(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("WBSTAR readout matches the published listing byte for byte") {
  const auto listing = parseHexText(kReadoutListing);
  const auto built = buildReadout(Reg::WBSTAR);
  CHECK(built.size() == 22);
  CHECK(wordsToBytes(built) == wordsToBytes(listing));
}

TEST_CASE("readout of another register changes only the read header") {
  auto a = buildReadout(Reg::WBSTAR);
  auto b = buildReadout(Reg::BOOTSTS);
  CHECK(b[17] == 0x2802C001);
  b[17] = a[17];
  CHECK(a == b);
}

TEST_CASE("plain header and footer framing") {
  const Block128 iv{{1, 2, 3, 4}};
  const auto h = plainHeader(iv, 0x98);
  REQUIRE(h.size() == kPlainHeaderWords);
  CHECK(h[10] == kSyncWord);
  CHECK(h[11] == kNopWord);
  CHECK(h[12] == 0x30016004);
  CHECK(std::vector<Word>(h.begin() + 13, h.begin() + 17) == std::vector<Word>{1, 2, 3, 4});
  CHECK(h[17] == 0x30034001);
  CHECK(h[18] == 0x98);

  const auto f = plainFooter();
  REQUIRE(f.size() == kPlainFooterWords);
  CHECK(f[0] == 0x30008001);
  CHECK(f[1] == cmd::kDesync);
}

TEST_CASE("encrypted config header starts like the published structure") {
  const auto c = configHeader(0, 100);
  REQUIRE(c.size() == kConfigHeaderWords);
  CHECK(std::vector<Word>(c.begin(), c.begin() + 8) ==
        std::vector<Word>{0x30022001, 0x00000000, 0x30020001, 0x00000000, 0x30008001,
                          0x00000000, kNopWord, 0x30008001});
  CHECK(c[11] == (0x50000000u | 100));
}

TEST_CASE("built region decrypts (reference AES) to the intended plaintext") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto c = ref::makeCase(seed);
    CHECK(ref::decryptRegion(c.aes, c.bs) == c.plain);
    CHECK(c.bs.words.size() == kPlainHeaderWords + c.bs.encWords() + kPlainFooterWords);
    CHECK(c.bs.words[c.bs.encStart - 1] == c.bs.encWords());
  }
}

// The tag covers a body of whole 512-bit chunks, with the 16-word header
// chunk before it and the 40-word footer after it.
TEST_CASE("envelope alignment over random builds") {
  for (std::uint64_t seed = 100; seed < 140; ++seed) {
    const auto c = ref::makeCase(seed, DeviceModel::Series7, 1, 700);
    const std::size_t n = c.plain.size();
    const std::size_t body = n - kHeaderChunkWords - kFooterWords;
    CHECK(body % kChunkWords == 0);
    CHECK(n % 4 == 0);
    const auto parsed = parseEnvelope(std::span<const Word>(c.plain).first(16),
                                      std::span<const Word>(c.plain).last(kFooterWords));
    CHECK(parsed.key == c.hmac);
    CHECK(parsed.tag == computeTag(c.hmac, std::span<const Word>(c.plain).subspan(16, body)));
  }
}

TEST_CASE("layout roles") {
  const auto c = ref::makeCase(3, DeviceModel::Series7, 64, 64);
  const auto& l = c.bs.layout;
  REQUIRE(l.size() == c.bs.blockCount);
  for (std::size_t t = 1; t <= 4; ++t) CHECK(l[t - 1] == BlockRole::HmacHeader);
  for (std::size_t t = 5; t <= 7; ++t) CHECK(l[t - 1] == BlockRole::ConfigHeader);
  CHECK(l[7] == BlockRole::Fabric);
  for (std::size_t t = c.bs.blockCount - 9; t <= c.bs.blockCount; ++t) {
    CHECK(l[t - 1] == BlockRole::HmacFooter);
  }
}

TEST_CASE("parseEncrypted finds the region of a captured bitstream") {
  const auto c = ref::makeCase(7);
  const auto p = parseEncrypted(c.bs.words);
  CHECK(p.encStart == c.bs.encStart);
  CHECK(p.blockCount == c.bs.blockCount);
  CHECK(p.iv() == c.opts.iv);
  CHECK(p.syncIndex == c.bs.syncIndex);
  for (std::size_t t = 0; t <= p.blockCount; ++t) CHECK(p.block(t) == c.bs.block(t));

  CHECK(codeOf([] { parseEncrypted(std::vector<Word>{1, 2, 3}); }) == ErrorCode::MalformedInput);
  BuildOptions o;
  o.fabricPayload = {1, 2, 3};
  CHECK(codeOf([&] { parseEncrypted(buildPlain(o)); }) == ErrorCode::MalformedInput);
}

TEST_CASE("empty fabric is rejected") {
  BuildOptions o;
  CHECK(codeOf([&] { buildBody(o); }) == ErrorCode::MalformedInput);
}

TEST_CASE("length delta turns the WBSTAR write into 9 + j words") {
  for (int j = 1; j <= 4; ++j) {
    CHECK((0x30020001u ^ lengthDelta({}, j)) == (0x30020000u | static_cast<Word>(9 + j)));
  }
}

TEST_CASE("malicious bitstream shape and decrypted content") {
  const auto c = ref::makeCase(11);
  const auto truth = ref::decryptRegion(c.aes, c.bs);
  std::mt19937_64 rng(1);
  for (std::size_t t : {std::size_t{1}, std::size_t{5}, std::size_t{9}, c.bs.blockCount}) {
    for (int j = 4; j >= 1; --j) {
      const Block128 want = plainBlock(truth, t);
      const std::vector<Word> trailing(want.w.begin() + j, want.w.end());
      const auto parts = buildMaliciousPair(c.bs, c.bs.block(t - 1), c.bs.block(t),
                                            ref::randomBlock(rng), j, trailing);
      REQUIRE(parts.words.size() == kMaliciousWords);
      const auto mal = parseEncrypted(parts.words);
      CHECK(mal.encWords() == kMaliciousEncWords);
      CHECK(parts.words[18] == 0x98);

      const auto dec = ref::decryptRegion(c.aes, mal);
      // WBSTAR write with the stretched length in the first attack block.
      CHECK(dec[16] == 0x30022001);
      CHECK(dec[18] == (0x30020000u | static_cast<Word>(9 + j)));
      // Fourth attack block: target words, then NOPs.
      for (int k = 1; k <= 4; ++k) {
        const Word got = dec[28 + k - 1];
        CHECK(got == (k <= j ? want.w[k - 1] : kNopWord));
      }
      CHECK(parts.nopPatchWords.size() == static_cast<std::size_t>(4 - j));
      CHECK(parts.patchedHeaderWord == mal.encStart + 14);

      // Nothing after the leaked word writes WBSTAR again.
      const std::span<const Word> after = std::span<const Word>(dec).subspan(32, 80);
      PacketWalker w(after);
      while (!w.done()) {
        const auto s = w.next();
        const bool wbstarWrite = s.kind == WalkStep::Kind::Packet &&
                                 s.header.opcode == Opcode::Write && s.target == Reg::WBSTAR &&
                                 !s.payload.empty();
        CHECK_FALSE(wbstarWrite);
      }
    }
  }
}

TEST_CASE("first block uses the plain-header IV as its predecessor") {
  const auto c = ref::makeCase(12);
  const auto truth = ref::decryptRegion(c.aes, c.bs);
  const auto words = buildMalicious(c.bs, 1, 4, std::nullopt);
  const auto dec = ref::decryptRegion(c.aes, parseEncrypted(words));
  CHECK(dec[31] == truth[3]);
}

TEST_CASE("naive frame leaves the write length alone") {
  const auto c = ref::makeCase(13);
  const auto parts =
      buildMaliciousPair(c.bs, c.bs.block(8), c.bs.block(9), Block128{}, 2, {}, {}, false);
  const auto dec = ref::decryptRegion(c.aes, parseEncrypted(parts.words));
  CHECK(dec[18] == 0x30020001);
  CHECK(parts.nopPatchWords.empty());
}

TEST_CASE("buildMalicious argument errors") {
  const auto c = ref::makeCase(14);
  CHECK(codeOf([&] { buildMalicious(c.bs, 0, 4, std::nullopt); }) == ErrorCode::BlockOutOfRange);
  CHECK(codeOf([&] { buildMalicious(c.bs, c.bs.blockCount + 1, 4, std::nullopt); }) ==
        ErrorCode::BlockOutOfRange);
  CHECK(codeOf([&] { buildMalicious(c.bs, 5, 0, std::nullopt); }) == ErrorCode::BlockOutOfRange);
  CHECK(codeOf([&] { buildMalicious(c.bs, 5, 3, std::nullopt); }) ==
        ErrorCode::MissingTrailingKnowledge);
  const std::vector<Word> one{kNopWord};
  CHECK(codeOf([&] { buildMalicious(c.bs, 5, 2, std::span<const Word>(one)); }) ==
        ErrorCode::MissingTrailingKnowledge);
}

TEST_CASE("plain build carries the same body") {
  BuildOptions o;
  o.fabricPayload = {0xDEADBEEF, 0x12345678};
  o.wbstarValue = 0x00400000;
  const auto words = buildPlain(o);
  const auto body = buildBody(o);
  CHECK(words[10] == kSyncWord);
  CHECK(std::equal(body.begin(), body.end(), words.begin() + 12));
  CHECK(words.size() == 12 + body.size() + kPlainFooterWords);
}
