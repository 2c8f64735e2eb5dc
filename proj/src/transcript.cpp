#include "cfglab/transcript.hpp"

namespace cfglab {

std::string Transcript::str() const {
  std::string out;
  for (const auto& l : lines_) {
    out += l;
    out += '\n';
  }
  return out;
}

}  // namespace cfglab
