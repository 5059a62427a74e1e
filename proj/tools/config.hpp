#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tailflow/flows/conditioner.hpp"
#include "tailflow/training.hpp"

namespace tailflow::cli {

enum class Command { de_synth, vi_synth, de_csv, nnreg, tail_est };

const char* to_string(Command c);
Command command_from_string(const std::string& s);

/// Bad key, bad value or missing field. The message names the key.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  Command command = Command::de_synth;
  std::vector<std::string> flows{"TTF"};
  std::size_t d = 5;
  double nu = 2.0;
  std::vector<std::uint64_t> seeds{0};
  /// Synthetic rows per run (de-synth), or per split (nnreg).
  std::size_t n = 5000;
  train::TrainConfig train;
  std::size_t diagnostic_samples = 10000;
  /// One activation for the flow conditioners; nnreg runs each listed one.
  std::vector<flows::Activation> activations{flows::Activation::relu};
  /// 0 means the default width (d + 10 for flows, 50 for nnreg).
  std::size_t hidden = 0;
  bool lu_layer = false;
  std::size_t bootstrap_reps = 500;
  std::size_t jobs = 1;
  std::string input;
  std::string out_dir = "tailflow_out";
  bool trace = false;
  bool save_models = false;
};

/// Raw key/value pairs in the order they were set; later sets win.
using RawConfig = std::map<std::string, std::string>;

/// Parses "key = value" lines. '#' starts a comment. A "[command]" header
/// scopes the keys below it to that command; keys before any header apply to
/// every command. Keys in other commands' sections are skipped.
RawConfig parse_config_text(const std::string& text, std::optional<Command> command);
RawConfig parse_config_file(const std::string& path, std::optional<Command> command);

/// Command defaults, then `raw`, then the seed fallback when no seeds were
/// given. Throws ConfigError on unknown keys or bad values.
ExperimentConfig resolve(Command command, const RawConfig& raw, std::optional<std::uint64_t> seed_fallback = {});

/// Every resolved key, one per line, in a form resolve() reads back to the same config.
std::string to_text(const ExperimentConfig& cfg);

/// "0..9", "1,4,7", "0..2,10".
std::vector<std::uint64_t> parse_seed_list(const std::string& s);

const std::vector<std::string>& known_keys();

}  // namespace tailflow::cli
