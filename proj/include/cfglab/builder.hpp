#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "cfglab/codec.hpp"
#include "cfglab/crypto.hpp"
#include "cfglab/word.hpp"

namespace cfglab {

enum class DeviceModel { Series7, Virtex6 };

struct BuildOptions {
  DeviceModel model = DeviceModel::Series7;
  Word wbstarValue = 0x00000000;
  std::vector<Word> fabricPayload;
  Block128 iv;
};

enum class BlockRole { HmacHeader, ConfigHeader, Fabric, Footer, HmacFooter };

/// A complete encrypted bitstream as it travels on the wire, plus where the
/// encrypted region sits. Blocks of the region are numbered from 1; block 0
/// is the CBC IV written in the plain header.
struct EncryptedBitstream {
  std::vector<Word> words;
  std::size_t encStart = 0;    // index of the first encrypted word
  std::size_t blockCount = 0;  // encrypted region length in 128-bit blocks
  std::vector<BlockRole> layout;  // layout[t - 1] is the role of block t
  std::size_t syncIndex = 0;
  std::size_t ivIndex = 0;      // first IV word in the plain header

  std::size_t encWords() const { return blockCount * 4; }
  std::span<const Word> encRegion() const {
    return std::span<const Word>(words).subspan(encStart, encWords());
  }
  /// Ciphertext block t (1..blockCount), or the IV for t == 0.
  Block128 block(std::size_t t) const;
  Block128 iv() const;
};

// Fixed framing shared by every bitstream this module emits.
inline constexpr std::size_t kPreambleWords = 10;
inline constexpr std::size_t kPlainHeaderWords = 19;
inline constexpr std::size_t kPlainFooterWords = 40;
inline constexpr std::size_t kConfigHeaderWords = 12;

/// 0xFF padding and bus-width detect words, as in the readout listing.
std::vector<Word> preamble();

/// SYNC, NOP, CBC write with the IV, DWC write with encWordCount.
std::vector<Word> plainHeader(const Block128& iv, std::size_t encWordCount);
std::vector<Word> plainFooter();

/// Packets between the HMAC header and the fabric data. Identical for every
/// build except the WBSTAR value and the FDRI length.
std::vector<Word> configHeader(Word wbstarValue, std::size_t fabricWords);

/// Config header, fabric payload and config footer, padded with NOPs to a
/// whole number of 512-bit chunks. This is the message the tag covers.
std::vector<Word> buildBody(const BuildOptions& opts);

/// Plaintext of the whole encrypted region: HMAC header chunk, body, HMAC
/// footer with a valid tag.
std::vector<Word> regionPlaintext(const BuildOptions& opts, const HmacKey& kHmac);

/// Wraps an already encrypted region with the plain header and footer.
EncryptedBitstream assembleEncrypted(const Block128& iv, std::span<const Block128> cipher,
                                     std::vector<BlockRole> layout = {});

/// Layout for a region of blockCount blocks with a body of bodyWords words,
/// of which the first kConfigHeaderWords are config header and fabricWords
/// are fabric.
std::vector<BlockRole> regionLayout(std::size_t blockCount, std::size_t fabricWords);

/// Throws PayloadTooLarge if the fabric does not fit a Type2 count, and
/// MalformedInput if it is empty.
EncryptedBitstream buildEncrypted(const BuildOptions& opts, const AesKey256& kAes,
                                  const HmacKey& kHmac);

/// Unencrypted bitstream loading the same config header and fabric.
std::vector<Word> buildPlain(const BuildOptions& opts);

/// Reads a captured bitstream back into the EncryptedBitstream shape by
/// walking its plain header for the CBC and DWC writes. Throws MalformedInput.
EncryptedBitstream parseEncrypted(std::span<const Word> words);

/// Register readout bitstream (22 words, preamble included).
std::vector<Word> buildReadout(Reg r);

// ---------------------------------------------------------------------------
// Attack-1 bitstreams.

/// What the attacker assumes about the encrypted config header: the block
/// holding the WBSTAR write and the write's header word. Defaults match the
/// deterministic header emitted by configHeader().
struct HeaderTemplate {
  std::size_t block = 5;        // first block after the HMAC header
  int wordIndex = 3;            // position of the WBSTAR write header, 1..4
  Word writeHeader = 0x30020001;
};

inline constexpr std::size_t kMaliciousEncWords = 0x98;
inline constexpr std::size_t kMaliciousWords = 211;

/// Block ⓪ gets this XOR in word 3 so the WBSTAR write covers words through
/// wordIndex j of the fourth attack block: count 0x9 + j.
Word lengthDelta(const HeaderTemplate& tpl, int j);

struct MaliciousParts {
  std::vector<Word> words;                // full 211-word stream
  std::size_t patchedHeaderWord = 0;      // index in words of the Δ word
  std::vector<std::size_t> nopPatchWords; // indices of NOP-patched words
};

/// Attack frame around an arbitrary ciphertext pair: (cPrev, c) become the
/// third and fourth blocks of the attack chunk. j in 1..4 selects which word
/// of dec(c) ^ cPrev ends up in WBSTAR; knownTrailing holds that block's
/// words j+1..4 (exactly 4 - j values) so they can be turned into NOPs.
/// With patch == false the Δ and NOP patches are left out (naive frame).
MaliciousParts buildMaliciousPair(const EncryptedBitstream& captured, const Block128& cPrev,
                                  const Block128& c, const Block128& filler, int j,
                                  std::span<const Word> knownTrailing,
                                  const HeaderTemplate& tpl = {}, bool patch = true);

/// Malicious bitstream leaking word j of block t of the captured region.
std::vector<Word> buildMalicious(const EncryptedBitstream& target, std::size_t t, int j,
                                 std::optional<std::span<const Word>> knownTrailing,
                                 const Block128& filler = {}, const HeaderTemplate& tpl = {});

}  // namespace cfglab
