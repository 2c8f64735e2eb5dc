#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <sstream>

#include <fmt/format.h>

#include "cfglab/codec.hpp"
#include "cfglab/error.hpp"
#include "cfglab/word.hpp"

namespace cfglab {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::CountOverflow: return "CountOverflow";
    case ErrorCode::FillerMismatch: return "FillerMismatch";
    case ErrorCode::PayloadTooLarge: return "PayloadTooLarge";
    case ErrorCode::MissingTrailingKnowledge: return "MissingTrailingKnowledge";
    case ErrorCode::BlockOutOfRange: return "BlockOutOfRange";
    case ErrorCode::WrongInterface: return "WrongInterface";
    case ErrorCode::NoKeyLoaded: return "NoKeyLoaded";
    case ErrorCode::UnknownRegister: return "UnknownRegister";
    case ErrorCode::UnexpectedSuccess: return "UnexpectedSuccess";
    case ErrorCode::OracleDefended: return "OracleDefended";
    case ErrorCode::NonWordAligned: return "NonWordAligned";
    case ErrorCode::OrderingViolation: return "OrderingViolation";
    case ErrorCode::LedgerConflict: return "LedgerConflict";
    case ErrorCode::UnsafeFooter: return "UnsafeFooter";
    case ErrorCode::MalformedInput: return "MalformedInput";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

std::vector<std::uint8_t> wordsToBytes(std::span<const Word> words) {
  std::vector<std::uint8_t> out(words.size() * 4);
  for (std::size_t i = 0; i < words.size(); ++i) {
    storeBigEndian(words[i], out.data() + 4 * i);
  }
  return out;
}

std::vector<Word> bytesToWords(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 4 != 0) {
    throw Error(ErrorCode::MalformedInput,
                fmt::format("{} bytes is not a whole number of words",
                            bytes.size()));
  }
  std::vector<Word> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = loadBigEndian(bytes.data() + 4 * i);
  }
  return out;
}

namespace {

std::string strip(std::string s) {
  auto notSpace = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), notSpace));
  s.erase(std::find_if(s.rbegin(), s.rend(), notSpace).base(), s.end());
  return s;
}

std::uint32_t parseHexToken(const std::string& tok, std::size_t maxDigits,
                            std::size_t lineNo) {
  std::string digits = tok;
  if (digits.size() > 2 && digits[0] == '0' &&
      (digits[1] == 'x' || digits[1] == 'X')) {
    digits = digits.substr(2);
  }
  if (digits.empty() || digits.size() > maxDigits ||
      !std::all_of(digits.begin(), digits.end(),
                   [](unsigned char c) { return std::isxdigit(c); })) {
    throw Error(ErrorCode::MalformedInput,
                fmt::format("line {}: bad hex token '{}'", lineNo, tok));
  }
  return static_cast<std::uint32_t>(std::stoul(digits, nullptr, 16));
}

}  // namespace

std::vector<Word> parseHexText(const std::string& text) {
  std::vector<Word> words;
  std::vector<std::uint8_t> pendingBytes;  // listing style spans lines
  std::istringstream in(text);
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = strip(line);
    if (line.empty()) continue;

    if (line.find(',') != std::string::npos) {
      std::istringstream toks(line);
      std::string tok;
      while (std::getline(toks, tok, ',')) {
        tok = strip(tok);
        if (tok.empty()) continue;
        pendingBytes.push_back(
            static_cast<std::uint8_t>(parseHexToken(tok, 2, lineNo)));
        if (pendingBytes.size() == 4) {
          words.push_back(loadBigEndian(pendingBytes.data()));
          pendingBytes.clear();
        }
      }
      continue;
    }
    if (!pendingBytes.empty()) {
      throw Error(ErrorCode::MalformedInput,
                  fmt::format("line {}: word follows a partial byte group", lineNo));
    }
    words.push_back(parseHexToken(line, 8, lineNo));
  }
  if (!pendingBytes.empty()) {
    throw Error(ErrorCode::MalformedInput, "trailing partial word in byte listing");
  }
  return words;
}

std::string formatHexText(std::span<const Word> words) {
  std::string out;
  out.reserve(words.size() * 9);
  for (Word w : words) out += fmt::format("{:08X}\n", w);
  return out;
}

FileFormat formatForPath(const std::string& path) {
  auto endsWith = [&](std::string_view ext) {
    return path.size() >= ext.size() &&
           path.compare(path.size() - ext.size(), ext.size(), ext) == 0;
  };
  return endsWith(".hex") || endsWith(".txt") ? FileFormat::HexText
                                              : FileFormat::Binary;
}

std::vector<Word> readBitstreamFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open {}", path));
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (formatForPath(path) == FileFormat::HexText) return parseHexText(data);
  std::vector<std::uint8_t> bytes(data.begin(), data.end());
  return bytesToWords(bytes);
}

void writeBitstreamFile(const std::string& path, std::span<const Word> words) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, fmt::format("cannot write {}", path));
  if (formatForPath(path) == FileFormat::HexText) {
    out << formatHexText(words);
  } else {
    const auto bytes = wordsToBytes(words);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw Error(ErrorCode::Io, fmt::format("write to {} failed", path));
}

}  // namespace cfglab
