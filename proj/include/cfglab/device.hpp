#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfglab/builder.hpp"
#include "cfglab/codec.hpp"
#include "cfglab/crypto.hpp"
#include "cfglab/transcript.hpp"
#include "cfglab/word.hpp"

namespace cfglab {

enum class Interface { Jtag, SelectMap };
enum class KeyStorage { Bbram, Efuse };

struct RsTrapConfig {
  std::uint8_t triggerLevel = 0b11;  // RS[1:0] pattern that fires the trap
};

struct Countermeasures {
  bool validateBeforeUse = false;
  std::optional<RsTrapConfig> rsTrap;
};

enum class EngineState { Idle, AwaitSync, PlainHeader, EncryptedStream, Configured, Failed };

enum class ProgramStatus { Success, HmacMismatch, Rejected, PowerCycled };
enum class RejectReason { None, Lockdown, NoKeyLoaded, EngineFailed };

struct ProgramResult {
  ProgramStatus status = ProgramStatus::Success;
  RejectReason reason = RejectReason::None;
  bool autoResetApplied = false;
  std::vector<Word> readData;  // words returned by Read packets
};

std::string to_string(ProgramStatus s);
std::string to_string(RejectReason r);

/// RS[1:0] as seen on the pins; nullopt means high-Z.
using RsPins = std::optional<std::uint8_t>;

// BOOTSTS bits set by a failed encrypted load.
inline constexpr Word kBootstsFailure = 1u << 0;
inline constexpr Word kBootstsHmacError = 1u << 1;

inline constexpr Word kVirtex6WbstarMask = 0x3FFFFFFF;

/// Simulated configuration engine of one FPGA.
///
/// Words of an encrypted region are decrypted and their packets executed in
/// stream order; the HMAC tag is compared only once the region ends. With
/// validateBeforeUse set, packets of the region are held back until the tag
/// verified. WBSTAR and BOOTSTS survive automatic and manual resets.
///
/// Not thread-safe: calls on one Device must be serialized. Separate Device
/// objects share nothing.
class Device {
 public:
  explicit Device(DeviceModel model, Countermeasures cm = {},
                  std::size_t fabricCapacity = 4096);

  DeviceModel model() const { return model_; }
  const Countermeasures& countermeasures() const { return cm_; }
  EngineState engineState() const { return engine_; }
  bool secureLockdown() const { return lockdown_; }
  bool hasKey() const { return key_.has_value(); }
  std::optional<KeyStorage> keyStorage() const { return storage_; }

  /// Throws WrongInterface unless iface is JTAG.
  void loadKey(const AesKey256& key, KeyStorage storage, Interface iface);

  ProgramResult program(std::span<const Word> words, Interface iface);

  /// Throws UnknownRegister for addresses outside the catalog.
  Word readRegister(Reg r, Interface iface) const;

  /// Fabric memory as returned over an external port: zeros once an
  /// encrypted design is loaded.
  std::vector<Word> readbackFabric(Interface iface) const;

  /// PROGRAM_B pulse / JPROGRAM.
  void resetManual(Interface iface);

  /// Full power loss. The BBRAM key survives only with its battery intact.
  void powerCycle(bool bbramBatteryIntact = true);

  /// Also evaluates the RS trap, which may power-cycle the device.
  RsPins rsPinOutputs();

  bool trapFired() const { return trapFired_; }

  /// Words committed to fabric by the last successful load (test access).
  std::span<const Word> committedFabric() const {
    return std::span<const Word>(fabric_).first(committedWords_);
  }

  Transcript& transcript() { return transcript_; }
  const Transcript& transcript() const { return transcript_; }

 private:
  struct Effects;

  void defaultRegisters(bool keepPersistent);
  void autoReset();
  void writeRegister(Reg r, std::span<const Word> payload, bool encrypted, Effects& fx);
  bool executeStep(const WalkStep& step, bool encrypted, std::size_t base, Effects& fx);
  ProgramResult runEncrypted(std::span<const Word> cipherWords, Effects& fx);
  bool evaluateTrap();
  RsPins rsPinsNow() const;
  void commitStaging();

  DeviceModel model_;
  Countermeasures cm_;
  std::size_t fabricCapacity_;

  std::optional<AesKey256> key_;
  std::optional<KeyStorage> storage_;
  std::map<Reg, Word> registers_;
  std::vector<Word> fabric_;
  std::size_t committedWords_ = 0;
  std::vector<Word> staging_;  // FDRI data not yet committed
  Block128 iv_;
  EngineState engine_ = EngineState::Idle;
  bool lockdown_ = false;
  bool trapFired_ = false;
  Transcript transcript_;
};

}  // namespace cfglab
