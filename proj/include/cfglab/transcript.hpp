#pragma once

#include <string>
#include <vector>

namespace cfglab {

/// Session transcript of a simulated device: one line per packet, register
/// write, verification outcome and reset. Recording is off by default.
///
/// Line grammar (fields separated by one space):
///   sync plain:<i>
///   packet <plain|enc>:<i> <T1|T2> <NOP|READ|WRITE|RESERVED> <REG> count=<n>
///   write <REG> 0x<8 hex>           one line per word (FDRI: words=<n>)
///   read <REG> 0x<8 hex>
///   warn <plain|enc>:<i> <text>
///   decrypt words=<n>
///   hmac <ok|mismatch>
///   commit fabric words=<n>
///   reject <reason>
///   trap fired rs=<b1><b0>
///   desync
///   reset <auto|manual|power>
/// Offsets are word indices into the program() input (plain) or into the
/// encrypted region (enc).
class Transcript {
 public:
  void setEnabled(bool on) { enabled_ = on; }
  bool enabled() const { return enabled_; }

  void add(std::string line) {
    if (enabled_) lines_.push_back(std::move(line));
  }
  const std::vector<std::string>& lines() const { return lines_; }
  void clear() { lines_.clear(); }
  std::string str() const;

 private:
  bool enabled_ = false;
  std::vector<std::string> lines_;
};

}  // namespace cfglab
