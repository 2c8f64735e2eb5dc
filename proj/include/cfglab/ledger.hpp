#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cfglab/word.hpp"

namespace cfglab {

struct LedgerEntry {
  std::size_t block = 0;  // 1-based block of the encrypted region
  int word = 0;           // 1..4
  Word value = 0;         // recovered bits; unknown bits are 0
  Word mask = 0;          // bits that could not be recovered

  friend bool operator==(const LedgerEntry&, const LedgerEntry&) = default;
};

/// Recovered words of one captured bitstream. Entries are write-once:
/// recording a different value for a known position throws LedgerConflict.
///
/// Text form, one entry per line, sorted: `block:word:hexvalue:hexmask`,
/// e.g. `5:3:30020001:00000000`. Lines starting with '#' are ignored.
class RecoveryLedger {
 public:
  bool contains(std::size_t block, int word) const;
  std::optional<LedgerEntry> get(std::size_t block, int word) const;

  /// Adding an identical entry again is a no-op.
  void record(const LedgerEntry& e);

  /// Union of both ledgers. Throws LedgerConflict where they disagree.
  static RecoveryLedger merge(const RecoveryLedger& a, const RecoveryLedger& b);

  std::size_t size() const { return entries_.size(); }
  std::vector<LedgerEntry> entries() const;

  std::string toText() const;
  /// Throws MalformedInput on bad lines.
  static RecoveryLedger fromText(const std::string& text);
  void save(const std::string& path) const;
  static RecoveryLedger load(const std::string& path);

  friend bool operator==(const RecoveryLedger&, const RecoveryLedger&) = default;

 private:
  std::map<std::pair<std::size_t, int>, LedgerEntry> entries_;
};

}  // namespace cfglab
