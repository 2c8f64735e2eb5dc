#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace cfglab {

inline constexpr double kSecondsPerWord = 0.0079;

struct RuntimeEstimate {
  std::uint64_t words = 0;
  double seconds = 0;
  std::string hhmm;  // minutes rounded half up
};

/// Attack runtime for a bitstream of `bits` bits at one oracle query per
/// word. Throws NonWordAligned unless bits % 32 == 0.
RuntimeEstimate estimateRuntime(std::uint64_t bits, double perWordSeconds = kSecondsPerWord);

std::string formatHhMm(double seconds);

struct CatalogEntry {
  std::string_view part;
  std::uint64_t bitstreamBits;
  std::string_view publishedRuntime;  // HH:MM as printed in the runtime table
  bool extrapolated;                  // row derived from the measured device
};

std::span<const CatalogEntry> deviceCatalog();

}  // namespace cfglab
