#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "epd/common.hpp"
#include "epd/linops.hpp"
#include "epd/solver.hpp"

namespace epd::app {

enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericalAbort = 3, kVerificationFailure = 4 };

/// Malformed or inconsistent configuration; the message names the offending field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class VerificationFailure : public Error {
 public:
  using Error::Error;
};

struct VerifySettings {
  std::optional<double> rho_f;  ///< defaults to 0.5 / C_R
  double rho_u = 1.0;
  double rho_v = 1.0;
  std::optional<double> kappa;  ///< defaults to the certificate's choice
  std::optional<double> s;
  int samples = 20;
  int trials = 100;
};

/// Parsed INI run description. Relative paths are resolved against the config file.
struct RunConfig {
  GeometrySpec geometry;
  Index views_per_spectrum = 60;

  std::filesystem::path spectra_csv;
  std::filesystem::path materials_csv;
  std::optional<std::filesystem::path> energies_csv;

  std::filesystem::path ellipses_csv;

  SchemeId scheme = SchemeId::EpdExact;
  SolverConfig solver;

  std::optional<double> snr_db;
  std::uint64_t seed = 0;

  std::filesystem::path out_dir;
  bool write_pgm = true;
  bool energy_images = true;
  bool timing = false;

  VerifySettings verify;
};

RunConfig load_run_config(const std::filesystem::path& path);

/// Command-line overrides applied on top of the file.
struct Overrides {
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> scheme;
};

void apply_overrides(RunConfig& cfg, const Overrides& o);

/// key = value text file; keys "sha256.<file>" hold artifact hashes.
using Manifest = std::map<std::string, std::string>;

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& m);

/// What a command produced: files (relative to the output directory) and facts to record.
struct CommandOutput {
  std::vector<std::string> files;
  std::vector<std::pair<std::string, std::string>> facts;
  std::optional<std::string> failure;  ///< set when a mandatory check failed
};

CommandOutput cmd_simulate(const RunConfig& cfg);
CommandOutput cmd_reconstruct(const RunConfig& cfg);
CommandOutput cmd_verify(const RunConfig& cfg);
CommandOutput cmd_metrics(const RunConfig& cfg);

/// Runs a command and merges its hashes into manifest.txt. With `check` the new hashes
/// are compared with the recorded ones instead. Throws VerificationFailure on a hash
/// mismatch or a failed mandatory check.
int execute(const std::string& command, const RunConfig& cfg, bool check);

/// Maps an exception escaping a command to an exit code and prints it.
int report_failure(const std::exception& e);

}  // namespace epd::app
