#include "cfglab/estimate.hpp"

#include <array>
#include <cmath>

#include <fmt/format.h>

#include "cfglab/error.hpp"

namespace cfglab {

std::string formatHhMm(double seconds) {
  const auto minutes = static_cast<std::uint64_t>(std::floor(seconds / 60.0 + 0.5));
  return fmt::format("{:02}:{:02}", minutes / 60, minutes % 60);
}

RuntimeEstimate estimateRuntime(std::uint64_t bits, double perWordSeconds) {
  if (bits % 32 != 0) {
    throw Error(ErrorCode::NonWordAligned,
                fmt::format("{} bits is not a whole number of 32-bit words", bits));
  }
  RuntimeEstimate r;
  r.words = bits / 32;
  r.seconds = static_cast<double>(r.words) * perWordSeconds;
  r.hhmm = formatHhMm(r.seconds);
  return r;
}

namespace {

constexpr std::array<CatalogEntry, 10> kCatalog{{
    {"7S6", 4310752, "00:18", false},
    {"7S50", 17536096, "01:12", false},
    {"7S100", 29494496, "02:01", false},
    {"7A12T", 9934432, "00:41", false},
    {"7A35T", 17536096, "01:12", false},
    {"7A200T", 77845216, "05:20", false},
    {"7K70T", 24090592, "01:39", false},
    {"7K160T", 53540576, "03:42", true},
    {"7K480T", 149880032, "10:17", false},
    {"7VX1140T", 385127680, "26:25", false},
}};

}  // namespace

std::span<const CatalogEntry> deviceCatalog() { return kCatalog; }

}  // namespace cfglab
