#pragma once

// Command-line front end: analyze | gradcheck | train | bench.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ema/gradcheck.hpp"
#include "ema/report.hpp"

namespace ema {

enum ExitCode : int {
  kExitOk = 0,
  kExitGradMismatch = 1,
  kExitConfig = 2,
  kExitNumeric = 3,
};

/// Flags as given on the command line; unset optionals take per-subcommand defaults.
struct RunConfig {
  std::string subcommand;
  std::string backbone = "resnet50-cifar";
  std::string attention;
  std::optional<Index> groups;
  std::optional<Index> reduction;
  std::optional<Index> classes;
  std::optional<std::string> input_hw;  // "N" or "HxW"
  std::string variant = "full";
  std::string dataset = "synthetic";
  std::optional<Index> steps;
  std::optional<double> lr;
  std::uint64_t seed = 0;
  std::string format = "text";
  std::string out;
  std::optional<Index> batch;
  std::optional<Index> channels;
  std::optional<Index> subset;
  Index repetitions = 30;
  Index warmup = 5;
};

/// Parses "32" or "5x7".
std::pair<Index, Index> parse_hw(const std::string& text);

/// Each returns the finished document; ConfigError messages start with the offending flag.
Json cmd_analyze(const RunConfig& cfg);
Json cmd_gradcheck(const RunConfig& cfg, const LossBuilder* loss_override = nullptr);
Json cmd_train(const RunConfig& cfg);
Json cmd_bench(const RunConfig& cfg);

/// Runs one subcommand, writes the report and maps failures to exit codes.
int run_command(const RunConfig& cfg, std::ostream& out, std::ostream& err, const LossBuilder* loss_override = nullptr);

/// Full entry point; argv[0] is the program name.
int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace ema
