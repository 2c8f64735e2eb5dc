#include "cfglab/ledger.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include <fmt/format.h>

#include "cfglab/error.hpp"

namespace cfglab {

bool RecoveryLedger::contains(std::size_t block, int word) const {
  return entries_.count({block, word}) != 0;
}

std::optional<LedgerEntry> RecoveryLedger::get(std::size_t block, int word) const {
  const auto it = entries_.find({block, word});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void RecoveryLedger::record(const LedgerEntry& e) {
  if (e.word < 1 || e.word > 4 || e.block == 0) {
    throw Error(ErrorCode::BlockOutOfRange,
                fmt::format("ledger position {}:{} is invalid", e.block, e.word));
  }
  const auto [it, inserted] = entries_.try_emplace({e.block, e.word}, e);
  if (!inserted && !(it->second == e)) {
    throw Error(ErrorCode::LedgerConflict,
                fmt::format("block {} word {}: have {:08x}/{:08x}, got {:08x}/{:08x}", e.block,
                            e.word, it->second.value, it->second.mask, e.value, e.mask));
  }
}

RecoveryLedger RecoveryLedger::merge(const RecoveryLedger& a, const RecoveryLedger& b) {
  RecoveryLedger out = a;
  for (const auto& [key, e] : b.entries_) out.record(e);
  return out;
}

std::vector<LedgerEntry> RecoveryLedger::entries() const {
  std::vector<LedgerEntry> out;
  out.reserve(entries_.size());
  for (const auto& [key, e] : entries_) out.push_back(e);
  return out;
}

std::string RecoveryLedger::toText() const {
  std::string out;
  for (const auto& [key, e] : entries_) {
    out += fmt::format("{}:{}:{:08x}:{:08x}\n", e.block, e.word, e.value, e.mask);
  }
  return out;
}

RecoveryLedger RecoveryLedger::fromText(const std::string& text) {
  RecoveryLedger out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    LedgerEntry e;
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream fields(line);
    fields >> std::dec >> e.block >> c1 >> e.word >> c2 >> std::hex >> e.value >> c3 >> e.mask;
    std::string rest;
    fields >> rest;
    if (!fields.eof() || c1 != ':' || c2 != ':' || c3 != ':' || !rest.empty()) {
      throw Error(ErrorCode::MalformedInput,
                  fmt::format("ledger line {} is not block:word:value:mask", lineNo));
    }
    out.record(e);
  }
  return out;
}

void RecoveryLedger::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, fmt::format("cannot write ledger {}", path));
  out << toText();
}

RecoveryLedger RecoveryLedger::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open ledger {}", path));
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fromText(text);
}

}  // namespace cfglab
