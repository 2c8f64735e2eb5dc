#include "cli.hpp"

#include <memory>
#include <ostream>
#include <random>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "cfglab/attack.hpp"
#include "cfglab/builder.hpp"
#include "cfglab/codec.hpp"
#include "cfglab/device.hpp"
#include "cfglab/error.hpp"
#include "cfglab/estimate.hpp"
#include "cfglab/ledger.hpp"

namespace cfglab {

namespace {

DeviceModel parseModel(const std::string& s) {
  return s == "virtex6" ? DeviceModel::Virtex6 : DeviceModel::Series7;
}

Countermeasures parseCountermeasure(const std::string& s) {
  Countermeasures cm;
  if (s == "validate-before-use") cm.validateBeforeUse = true;
  if (s == "rs-trap") cm.rsTrap = RsTrapConfig{};
  return cm;
}

Block128 seededIv(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Block128 iv;
  for (auto& w : iv.w) w = static_cast<Word>(rng());
  return iv;
}

void writeWords(const std::string& path, std::span<const Word> words, std::ostream& out) {
  if (path == "-") {
    out << formatHexText(words);
  } else {
    writeBitstreamFile(path, words);
  }
}

struct Opts {
  std::string device = "series7";
  std::string countermeasure = "none";
  std::string aesKey, hmacKey, in, out, plainOut, ledger, fabric, fabricOut;
  std::string reg = "WBSTAR";
  std::uint64_t seed = 1;
  std::uint64_t bits = 0;
  Word wbstar = 0;
  std::size_t devices = 1;
  double perWord = kSecondsPerWord;
  bool trace = false;
  bool resume = false;
  bool verify = false;
};

std::vector<std::unique_ptr<Device>> provision(const Opts& o, std::size_t count) {
  const AesKey256 key = readAesKeyFile(o.aesKey);
  std::vector<std::unique_ptr<Device>> devs;
  for (std::size_t i = 0; i < count; ++i) {
    devs.push_back(
        std::make_unique<Device>(parseModel(o.device), parseCountermeasure(o.countermeasure)));
    devs.back()->loadKey(key, KeyStorage::Bbram, Interface::Jtag);
  }
  return devs;
}

int cmdKeygen(const Opts& o, std::ostream& err) {
  std::mt19937_64 rng(o.seed);
  std::array<std::uint8_t, 32> key{};
  for (auto& b : key) b = static_cast<std::uint8_t>(rng());
  writeKeyFile(o.out, key);
  fmt::print(err, "wrote key to {}\n", o.out);
  return kExitOk;
}

int cmdBuild(const Opts& o, std::ostream& out, std::ostream& err) {
  BuildOptions b;
  b.model = parseModel(o.device);
  b.wbstarValue = o.wbstar;
  b.fabricPayload = readBitstreamFile(o.in);
  const auto words = buildPlain(b);
  writeWords(o.out, words, out);
  fmt::print(err, "plain bitstream: {} words\n", words.size());
  return kExitOk;
}

int cmdEncrypt(const Opts& o, std::ostream& out, std::ostream& err) {
  BuildOptions b;
  b.model = parseModel(o.device);
  b.wbstarValue = o.wbstar;
  b.fabricPayload = readBitstreamFile(o.in);
  b.iv = seededIv(o.seed);
  const AesKey256 kAes = readAesKeyFile(o.aesKey);
  const HmacKey kHmac = readHmacKeyFile(o.hmacKey);
  const auto bs = buildEncrypted(b, kAes, kHmac);
  writeWords(o.out, bs.words, out);
  if (!o.plainOut.empty()) writeBitstreamFile(o.plainOut, regionPlaintext(b, kHmac));
  fmt::print(err, "encrypted bitstream: {} words, {} encrypted blocks\n", bs.words.size(),
             bs.blockCount);
  return kExitOk;
}

int cmdProgram(const Opts& o, std::ostream& out, std::ostream& err) {
  Device dev(parseModel(o.device), parseCountermeasure(o.countermeasure));
  if (!o.aesKey.empty()) {
    dev.loadKey(readAesKeyFile(o.aesKey), KeyStorage::Bbram, Interface::Jtag);
  }
  dev.transcript().setEnabled(o.trace);
  const auto words = readBitstreamFile(o.in);
  const ProgramResult r = dev.program(words, Interface::SelectMap);
  if (o.trace) out << dev.transcript().str();
  fmt::print(err, "status: {}", to_string(r.status));
  if (r.status == ProgramStatus::Rejected) fmt::print(err, " ({})", to_string(r.reason));
  if (r.autoResetApplied) fmt::print(err, ", automatic reset");
  fmt::print(err, "\n");
  for (Word w : r.readData) fmt::print(err, "read data: 0x{:08X}\n", w);
  fmt::print(err, "WBSTAR:  0x{:08X}\nBOOTSTS: 0x{:08X}\n",
             dev.readRegister(Reg::WBSTAR, Interface::SelectMap),
             dev.readRegister(Reg::BOOTSTS, Interface::SelectMap));
  if (!o.fabricOut.empty()) {
    const auto f = dev.committedFabric();
    writeBitstreamFile(o.fabricOut, std::vector<Word>(f.begin(), f.end()));
  }
  return r.status == ProgramStatus::Success ? kExitOk : kExitDefended;
}

int cmdReadout(const Opts& o, std::ostream& out, std::ostream& err) {
  const auto r = parseRegName(o.reg);
  if (!r) {
    fmt::print(err, "unknown register {}\n", o.reg);
    return kExitUsage;
  }
  writeWords(o.out, buildReadout(*r), out);
  return kExitOk;
}

void reportCost(std::ostream& err, std::size_t queries, std::size_t programs, double perWord) {
  const double seconds = static_cast<double>(queries) * perWord;
  fmt::print(err, "queries: {} words, {} bitstreams\n", queries, programs);
  fmt::print(err, "modeled time: {} ({:.1f} s at {} ms/word)\n", formatHhMm(seconds), seconds,
             perWord * 1000);
}

int cmdAttackDecrypt(const Opts& o, std::ostream& out, std::ostream& err) {
  const auto captured = parseEncrypted(readBitstreamFile(o.in));
  auto devs = provision(o, o.devices);
  SessionOptions so;
  so.target = parseModel(o.device);
  so.seed = o.seed;
  so.perWordSeconds = o.perWord;

  RecoveryLedger ledger;
  if (o.devices > 1) {
    std::vector<std::unique_ptr<DevicePort>> owned;
    std::vector<ConfigPort*> ports;
    for (auto& d : devs) {
      owned.push_back(std::make_unique<DevicePort>(*d));
      ports.push_back(owned.back().get());
    }
    std::size_t queries = 0;
    ledger = recoverParallel(ports, captured, so, &queries);
    fmt::print(err, "recovered with {} devices in parallel\n", o.devices);
    reportCost(err, queries, 2 * queries, o.perWord / static_cast<double>(o.devices));
  } else {
    DevicePort port(*devs[0]);
    OracleSession session(port, captured, so);
    if (o.resume) session.adoptLedger(RecoveryLedger::load(o.ledger));
    try {
      session.recoverBitstream();
    } catch (const Error&) {
      if (!o.ledger.empty()) session.ledger().save(o.ledger);
      throw;
    }
    ledger = session.ledger();
    reportCost(err, session.queryCount(), session.programCount(), o.perWord);
  }

  const Recovery rec = recoveryFromLedger(ledger, captured.blockCount);
  writeWords(o.out, rec.words, out);
  if (!o.ledger.empty()) ledger.save(o.ledger);
  const Word mask = unknownMaskFor(so.target);
  if (mask != 0) fmt::print(err, "unknown bits per word: 0x{:08X}\n", mask);
  fmt::print(err, "recovered {} words\n", rec.words.size());
  return kExitOk;
}

int cmdAttackForge(const Opts& o, std::ostream& out, std::ostream& err) {
  const auto captured = parseEncrypted(readBitstreamFile(o.in));
  auto devs = provision(o, 1);
  DevicePort port(*devs[0]);
  SessionOptions so;
  so.target = parseModel(o.device);
  so.seed = o.seed;
  so.perWordSeconds = o.perWord;
  OracleSession session(port, captured, so);

  BuildOptions b;
  b.model = so.target;
  b.wbstarValue = o.wbstar;
  b.fabricPayload = readBitstreamFile(o.fabric);
  const auto body = buildBody(b);
  const auto forged = session.forgeBitstream(body, readHmacKeyFile(o.hmacKey));
  writeWords(o.out, forged.words, out);
  reportCost(err, session.queryCount(), session.programCount(), o.perWord);

  if (o.verify) {
    auto fresh = provision(o, 1);
    const auto r = fresh[0]->program(forged.words, Interface::SelectMap);
    const auto f = fresh[0]->committedFabric();
    const bool same = std::equal(f.begin(), f.end(), b.fabricPayload.begin(), b.fabricPayload.end());
    fmt::print(err, "verify: {}, fabric {}\n", to_string(r.status), same ? "matches" : "differs");
    if (r.status != ProgramStatus::Success || !same) return kExitDefended;
  }
  return kExitOk;
}

int cmdEstimate(const Opts& o, std::ostream& out) {
  if (o.bits != 0) {
    fmt::print(out, "{}\n", estimateRuntime(o.bits, o.perWord).hhmm);
    return kExitOk;
  }
  fmt::print(out, "{:<10} {:>12} {:>6} {:>9}\n", "part", "bits", "model", "published");
  for (const auto& e : deviceCatalog()) {
    fmt::print(out, "{:<10} {:>12} {:>6} {:>9}\n", e.part, e.bitstreamBits,
               estimateRuntime(e.bitstreamBits, o.perWord).hhmm, e.publishedRuntime);
  }
  return kExitOk;
}

}  // namespace

int runCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Opts o;
  CLI::App app{"Bitstream encryption lab: build, simulate and attack encrypted FPGA bitstreams",
               "cfglab"};
  app.require_subcommand(1);

  const std::vector<std::string> models{"series7", "virtex6"};
  const std::vector<std::string> cms{"none", "validate-before-use", "rs-trap"};

  auto addDevice = [&](CLI::App* s) {
    s->add_option("--device", o.device, "Target model")->check(CLI::IsMember(models));
  };
  auto addCountermeasure = [&](CLI::App* s) {
    s->add_option("--countermeasure", o.countermeasure, "Device countermeasure")
        ->check(CLI::IsMember(cms));
  };

  auto* keygen = app.add_subcommand("keygen", "Write a random 256-bit key file");
  keygen->add_option("--out", o.out, "Key file")->required();
  keygen->add_option("--seed", o.seed, "Generator seed");

  auto* build = app.add_subcommand("build", "Unencrypted bitstream from fabric words");
  build->add_option("--in", o.in, "Fabric words")->required();
  build->add_option("--out", o.out, "Bitstream ('-' for stdout)")->required();
  build->add_option("--wbstar", o.wbstar, "WBSTAR value");
  addDevice(build);

  auto* encrypt = app.add_subcommand("encrypt", "Encrypted, authenticated bitstream");
  encrypt->add_option("--in", o.in, "Fabric words")->required();
  encrypt->add_option("--out", o.out, "Bitstream ('-' for stdout)")->required();
  encrypt->add_option("--aes-key", o.aesKey, "AES-256 key file")->required();
  encrypt->add_option("--hmac-key", o.hmacKey, "HMAC key file")->required();
  encrypt->add_option("--seed", o.seed, "IV seed");
  encrypt->add_option("--wbstar", o.wbstar, "WBSTAR value");
  encrypt->add_option("--plain-out", o.plainOut, "Also write the encrypted region plaintext");
  addDevice(encrypt);

  auto* program = app.add_subcommand("program", "Load a bitstream into a simulated device");
  program->add_option("--in", o.in, "Bitstream")->required();
  program->add_option("--aes-key", o.aesKey, "Key provisioned over JTAG first");
  program->add_flag("--trace", o.trace, "Print the device transcript to stdout");
  program->add_option("--fabric-out", o.fabricOut, "Write the committed fabric words");
  addDevice(program);
  addCountermeasure(program);

  auto* readout = app.add_subcommand("readout", "Register readout bitstream");
  readout->add_option("--register", o.reg, "Register name");
  readout->add_option("--out", o.out, "Bitstream ('-' for stdout)")->required();

  auto* decrypt = app.add_subcommand("attack-decrypt", "Recover the plaintext of an encrypted bitstream");
  decrypt->add_option("--in", o.in, "Captured encrypted bitstream")->required();
  decrypt->add_option("--aes-key", o.aesKey, "Key of the simulated target (not given to the attack)")
      ->required();
  decrypt->add_option("--out", o.out, "Recovered plaintext ('-' for stdout)")->required();
  auto* ledgerOpt = decrypt->add_option("--ledger", o.ledger, "Recovery ledger file");
  auto* resumeOpt =
      decrypt->add_flag("--resume", o.resume, "Continue from the ledger file")->needs(ledgerOpt);
  decrypt->add_option("--devices", o.devices, "Same-key devices to attack in parallel")
      ->check(CLI::Range(1, 64))
      ->excludes(resumeOpt);
  decrypt->add_option("--seed", o.seed, "Seed for filler blocks");
  decrypt->add_option("--per-word", o.perWord, "Seconds per recovered word");
  addDevice(decrypt);
  addCountermeasure(decrypt);

  auto* forge = app.add_subcommand("attack-forge", "Encrypt attacker fabric with the device as oracle");
  forge->add_option("--in", o.in, "Captured encrypted bitstream")->required();
  forge->add_option("--aes-key", o.aesKey, "Key of the simulated target (not given to the attack)")
      ->required();
  forge->add_option("--hmac-key", o.hmacKey, "Attacker HMAC key file")->required();
  forge->add_option("--fabric", o.fabric, "Attacker fabric words")->required();
  forge->add_option("--out", o.out, "Forged bitstream ('-' for stdout)")->required();
  forge->add_option("--wbstar", o.wbstar, "WBSTAR value in the forged header");
  forge->add_option("--seed", o.seed, "Seed for arbitrary blocks");
  forge->add_option("--per-word", o.perWord, "Seconds per oracle word");
  forge->add_flag("--verify", o.verify, "Program the result into a fresh same-key device");
  addDevice(forge);
  addCountermeasure(forge);

  auto* estimate = app.add_subcommand("estimate", "Attack runtime for a bitstream size");
  estimate->add_option("--bits", o.bits, "Bitstream size in bits; omit for the device table");
  estimate->add_option("--per-word", o.perWord, "Seconds per recovered word");

  std::vector<const char*> argv{"cfglab"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (keygen->parsed()) return cmdKeygen(o, err);
    if (build->parsed()) return cmdBuild(o, out, err);
    if (encrypt->parsed()) return cmdEncrypt(o, out, err);
    if (program->parsed()) return cmdProgram(o, out, err);
    if (readout->parsed()) return cmdReadout(o, out, err);
    if (decrypt->parsed()) return cmdAttackDecrypt(o, out, err);
    if (forge->parsed()) return cmdAttackForge(o, out, err);
    if (estimate->parsed()) return cmdEstimate(o, out);
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::OracleDefended:
      case ErrorCode::NoKeyLoaded:
      case ErrorCode::UnexpectedSuccess:
        fmt::print(err, "oracle defended: {}\n", e.what());
        return kExitDefended;
      default:
        fmt::print(err, "error ({}): {}\n", to_string(e.code()), e.what());
        return kExitIo;
    }
  }
  return kExitUsage;
}

}  // namespace cfglab
