#include "cfglab/device.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "cfglab/error.hpp"

namespace cfglab {

std::string to_string(ProgramStatus s) {
  switch (s) {
    case ProgramStatus::Success: return "success";
    case ProgramStatus::HmacMismatch: return "hmac-mismatch";
    case ProgramStatus::Rejected: return "rejected";
    case ProgramStatus::PowerCycled: return "power-cycled";
  }
  return "?";
}

std::string to_string(RejectReason r) {
  switch (r) {
    case RejectReason::None: return "none";
    case RejectReason::Lockdown: return "lockdown";
    case RejectReason::NoKeyLoaded: return "no-key";
    case RejectReason::EngineFailed: return "engine-failed";
  }
  return "?";
}

namespace {

Word defaultIdcode(DeviceModel m) {
  return m == DeviceModel::Series7 ? 0x0364C093 : 0x04250093;
}

const char* opcodeName(Opcode op) {
  switch (op) {
    case Opcode::Nop: return "NOP";
    case Opcode::Read: return "READ";
    case Opcode::Write: return "WRITE";
    case Opcode::Reserved: return "RESERVED";
  }
  return "?";
}

std::string where(bool encrypted, std::size_t at) {
  return fmt::format("{}:{}", encrypted ? "enc" : "plain", at);
}

}  // namespace

// What one packet did beyond plain register state.
struct Device::Effects {
  std::vector<Word> readData;
  std::optional<Word> dwc;  // DWC written in plain mode
  bool desync = false;
  bool powerCycled = false;
  std::optional<RejectReason> rejected;
};

Device::Device(DeviceModel model, Countermeasures cm, std::size_t fabricCapacity)
    : model_(model), cm_(cm), fabricCapacity_(fabricCapacity), fabric_(fabricCapacity, 0) {
  defaultRegisters(false);
}

void Device::defaultRegisters(bool keepPersistent) {
  const Word wbstar = registers_[Reg::WBSTAR];
  const Word bootsts = registers_[Reg::BOOTSTS];
  registers_.clear();
  for (Reg r : registerCatalog()) registers_[r] = 0;
  registers_[Reg::IDCODE] = defaultIdcode(model_);
  if (keepPersistent) {
    registers_[Reg::WBSTAR] = wbstar;
    registers_[Reg::BOOTSTS] = bootsts;
  }
}

void Device::loadKey(const AesKey256& key, KeyStorage storage, Interface iface) {
  if (iface != Interface::Jtag) {
    throw Error(ErrorCode::WrongInterface, "keys can only be programmed over JTAG");
  }
  key_ = key;
  storage_ = storage;
}

void Device::autoReset() {
  defaultRegisters(true);
  registers_[Reg::BOOTSTS] |= kBootstsFailure | kBootstsHmacError;
  std::fill(fabric_.begin(), fabric_.end(), 0);
  committedWords_ = 0;
  staging_.clear();
  lockdown_ = false;
  engine_ = EngineState::AwaitSync;
  transcript_.add("reset auto");
}

void Device::resetManual(Interface) {
  defaultRegisters(true);
  std::fill(fabric_.begin(), fabric_.end(), 0);
  committedWords_ = 0;
  staging_.clear();
  lockdown_ = false;
  engine_ = EngineState::AwaitSync;
  transcript_.add("reset manual");
}

void Device::powerCycle(bool bbramBatteryIntact) {
  defaultRegisters(false);
  std::fill(fabric_.begin(), fabric_.end(), 0);
  committedWords_ = 0;
  staging_.clear();
  lockdown_ = false;
  engine_ = EngineState::Idle;
  if (storage_ == KeyStorage::Bbram && !bbramBatteryIntact) {
    key_.reset();
    storage_.reset();
  }
  transcript_.add("reset power");
}

Word Device::readRegister(Reg r, Interface) const {
  if (!isKnown(r)) {
    throw Error(ErrorCode::UnknownRegister, fmt::format("no register {}", regName(r)));
  }
  return registers_.at(r);
}

std::vector<Word> Device::readbackFabric(Interface) const {
  if (lockdown_) return std::vector<Word>(fabric_.size(), 0);
  return fabric_;
}

RsPins Device::rsPinsNow() const {
  const bool configPhase = engine_ != EngineState::Configured;
  const Word w = registers_.at(Reg::WBSTAR);
  if (!configPhase || !(w & (1u << 29))) return std::nullopt;
  return static_cast<std::uint8_t>(w >> 30);
}

bool Device::evaluateTrap() {
  if (!cm_.rsTrap) return false;
  const RsPins pins = rsPinsNow();
  if (!pins || *pins != cm_.rsTrap->triggerLevel) return false;
  transcript_.add(fmt::format("trap fired rs={:02b}", *pins));
  trapFired_ = true;
  powerCycle(false);
  return true;
}

RsPins Device::rsPinOutputs() {
  const RsPins pins = rsPinsNow();
  evaluateTrap();
  return pins;
}

void Device::commitStaging() {
  const std::size_t n = std::min(staging_.size(), fabricCapacity_);
  std::fill(fabric_.begin(), fabric_.end(), 0);
  std::copy_n(staging_.begin(), n, fabric_.begin());
  committedWords_ = n;
  staging_.clear();
  engine_ = EngineState::Configured;
  transcript_.add(fmt::format("commit fabric words={}", n));
}

void Device::writeRegister(Reg r, std::span<const Word> payload, bool encrypted,
                           Effects& fx) {
  if (payload.empty()) return;
  if (!isKnown(r)) {
    transcript_.add(fmt::format("warn write to {} ignored", regName(r)));
    return;
  }
  switch (r) {
    case Reg::DWC:
      if (encrypted) {
        transcript_.add("warn DWC write inside encrypted region ignored");
        return;
      }
      transcript_.add(fmt::format("write DWC 0x{:08X}", payload.back()));
      fx.dwc = payload.back();
      return;
    case Reg::CBC:
      if (encrypted) {
        transcript_.add("warn CBC write inside encrypted region ignored");
        return;
      }
      for (std::size_t i = 0; i < payload.size(); ++i) iv_.w[i % 4] = payload[i];
      registers_[Reg::CBC] = payload.back();
      transcript_.add(fmt::format("write CBC words={}", payload.size()));
      return;
    case Reg::FDRI:
      if (lockdown_) {
        fx.rejected = RejectReason::Lockdown;
        return;
      }
      staging_.insert(staging_.end(), payload.begin(), payload.end());
      transcript_.add(fmt::format("write FDRI words={}", payload.size()));
      return;
    case Reg::WBSTAR:
      // Every word passes through the register; only the last one stays.
      // The RS pins are sampled once the packet has been written.
      for (Word w : payload) {
        const Word v = model_ == DeviceModel::Virtex6 ? (w & kVirtex6WbstarMask) : w;
        registers_[Reg::WBSTAR] = v;
        transcript_.add(fmt::format("write WBSTAR 0x{:08X}", v));
      }
      if (evaluateTrap()) fx.powerCycled = true;
      return;
    case Reg::CMD:
      for (Word w : payload) {
        registers_[Reg::CMD] = w;
        transcript_.add(fmt::format("write CMD 0x{:08X}", w));
        if (w == cmd::kDesync) fx.desync = true;
        // In encrypted mode START waits for the tag; see runEncrypted.
        if (w == cmd::kStart && !encrypted) commitStaging();
      }
      return;
    default:
      registers_[r] = payload.back();
      transcript_.add(fmt::format("write {} 0x{:08X}", regName(r), payload.back()));
      return;
  }
}

bool Device::executeStep(const WalkStep& step, bool encrypted, std::size_t base,
                         Effects& fx) {
  const std::size_t at = base + step.offset;
  if (step.kind == WalkStep::Kind::Skip) {
    transcript_.add(fmt::format("warn {} {}", where(encrypted, at), step.note));
    return true;
  }
  const auto& h = step.header;
  transcript_.add(fmt::format("packet {} {} {} {} count={}", where(encrypted, at),
                              h.type == HeaderType::Type1 ? "T1" : "T2", opcodeName(h.opcode),
                              step.target && h.opcode != Opcode::Nop ? regName(*step.target)
                                                                     : std::string("-"),
                              h.wordCount));
  switch (h.opcode) {
    case Opcode::Nop:
      return true;
    case Opcode::Reserved:
      transcript_.add(fmt::format("warn {} reserved opcode", where(encrypted, at)));
      return true;
    case Opcode::Read:
      if (encrypted || !step.target || !isKnown(*step.target)) {
        transcript_.add(fmt::format("warn {} read skipped", where(encrypted, at)));
        return true;
      }
      for (std::uint32_t i = 0; i < h.wordCount; ++i) {
        const Word v = registers_.at(*step.target);
        fx.readData.push_back(v);
        transcript_.add(fmt::format("read {} 0x{:08X}", regName(*step.target), v));
      }
      return true;
    case Opcode::Write:
      if (!step.target) {
        transcript_.add(fmt::format("warn {} orphan Type2 write", where(encrypted, at)));
        return true;
      }
      writeRegister(*step.target, step.payload, encrypted, fx);
      return !(fx.powerCycled || fx.rejected || fx.dwc || fx.desync);
  }
  return true;
}

ProgramResult Device::runEncrypted(std::span<const Word> cipherWords, Effects& fx) {
  ProgramResult res;
  const std::size_t n = cipherWords.size();
  transcript_.add(fmt::format("decrypt words={}", n));
  const bool wellFormed = n % 4 == 0 && n >= kHeaderChunkWords + kFooterWords;
  if (!wellFormed) {
    transcript_.add("warn encrypted region length invalid");
    transcript_.add("hmac mismatch");
    autoReset();
    res.status = ProgramStatus::HmacMismatch;
    res.autoResetApplied = true;
    return res;
  }

  engine_ = EngineState::EncryptedStream;
  const auto cipher = wordsToBlocks(cipherWords);
  const auto plainWords = blocksToWords(cbcDecrypt(*key_, iv_, cipher));
  const std::span<const Word> plain(plainWords);
  const auto header = plain.first<kHeaderChunkWords>();
  const auto body = plain.subspan(kHeaderChunkWords, n - kHeaderChunkWords - kFooterWords);
  const auto footer = plain.last(kFooterWords);

  auto execBody = [&]() -> bool {
    PacketWalker walker(body);
    while (!walker.done()) {
      const WalkStep step = walker.next();
      if (!executeStep(step, true, kHeaderChunkWords, fx)) {
        if (fx.powerCycled || fx.rejected) return false;
        // DWC/CBC are ignored inside the region; DESYNC is honored only
        // after the tag, like START.
      }
    }
    return true;
  };

  // Executed as the words arrive: the tag is compared only afterwards.
  if (!cm_.validateBeforeUse) {
    fx.desync = false;
    if (!execBody()) {
      res.status = fx.powerCycled ? ProgramStatus::PowerCycled : ProgramStatus::Rejected;
      if (fx.rejected) {
        res.reason = *fx.rejected;
        transcript_.add(fmt::format("reject {}", to_string(*fx.rejected)));
      }
      return res;
    }
  }

  const Tag expected = tagFromChunks(header, body, footer.first<kChunkWords>());
  Tag got{};
  std::copy(footer.end() - kTagWords, footer.end(), got.begin());
  if (expected != got) {
    transcript_.add("hmac mismatch");
    autoReset();
    res.status = ProgramStatus::HmacMismatch;
    res.autoResetApplied = true;
    return res;
  }
  transcript_.add("hmac ok");

  if (cm_.validateBeforeUse) {
    if (!execBody()) {
      res.status = fx.powerCycled ? ProgramStatus::PowerCycled : ProgramStatus::Rejected;
      if (fx.rejected) res.reason = *fx.rejected;
      return res;
    }
  }
  fx.desync = false;
  commitStaging();
  lockdown_ = true;
  engine_ = EngineState::Configured;
  res.status = ProgramStatus::Success;
  return res;
}

ProgramResult Device::program(std::span<const Word> words, Interface) {
  ProgramResult res;
  Effects fx;
  auto finish = [&](ProgramResult r) {
    r.readData = std::move(fx.readData);
    return r;
  };
  auto reject = [&](RejectReason why) {
    ProgramResult r;
    r.status = ProgramStatus::Rejected;
    r.reason = why;
    transcript_.add(fmt::format("reject {}", to_string(why)));
    return finish(r);
  };

  if (engine_ == EngineState::Failed) return reject(RejectReason::EngineFailed);

  bool synced = false;
  bool sawEncrypted = false;
  std::size_t pos = 0;
  while (pos < words.size()) {
    if (!synced) {
      const auto s = findSync(words.subspan(pos));
      if (!s) break;
      pos += *s + 1;
      synced = true;
      if (engine_ != EngineState::Configured) engine_ = EngineState::PlainHeader;
      transcript_.add(fmt::format("sync plain:{}", pos - 1));
      continue;
    }

    PacketWalker walker(words.subspan(pos));
    bool event = false;
    while (!walker.done()) {
      const WalkStep step = walker.next();
      if (!executeStep(step, false, pos, fx)) {
        event = true;
        break;
      }
    }
    pos += walker.position();
    if (!event) break;

    if (fx.powerCycled) {
      res.status = ProgramStatus::PowerCycled;
      return finish(res);
    }
    if (fx.rejected) return reject(*fx.rejected);
    if (fx.desync) {
      fx.desync = false;
      synced = false;
      transcript_.add("desync");
      continue;
    }
    if (fx.dwc) {
      const std::size_t n = *fx.dwc;
      fx.dwc.reset();
      if (lockdown_) return reject(RejectReason::Lockdown);
      if (!key_) {
        engine_ = EngineState::Failed;
        return reject(RejectReason::NoKeyLoaded);
      }
      const std::size_t avail = std::min(n, words.size() - pos);
      ProgramResult enc = runEncrypted(words.subspan(pos, avail), fx);
      pos += avail;
      sawEncrypted = true;
      if (enc.status != ProgramStatus::Success) return finish(enc);
    }
  }

  if (!sawEncrypted && engine_ == EngineState::PlainHeader) {
    // A plain stream that ended without START leaves the engine waiting.
    engine_ = EngineState::AwaitSync;
  }
  res.status = ProgramStatus::Success;
  return finish(res);
}

}  // namespace cfglab
