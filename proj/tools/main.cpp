#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "config.hpp"
#include "run.hpp"

using namespace tailflow::cli;

namespace {

struct Flags {
  std::string config;
  std::map<std::string, std::string> values;
  std::vector<std::string> sets;
  bool trace = false;
  bool save_models = false;
};

void add_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "key = value config file (flags override it)");
  const std::pair<const char*, const char*> opts[] = {
      {"flow", "flow name(s), comma separated"},
      {"d", "dimension"},
      {"nu", "Student-T degrees of freedom of the synthetic data"},
      {"seeds", "seed list, e.g. 0..9 or 1,4,7"},
      {"lr", "Adam learning rate"},
      {"batch", "batch size, or 'full' for full-pass steps; ELBO draws per step for vi-synth"},
      {"epochs", "maximum epochs (iterations for vi-synth)"},
      {"patience", "early-stopping patience in epochs"},
      {"clip-norm", "gradient norm cap, or 'none'"},
      {"jobs", "parallel runs"},
      {"out-dir", "output directory"},
      {"input", "input CSV for de-csv and tail-est"},
      {"activation", "conditioner activation; nnreg accepts a list"},
  };
  for (const auto& [name, help] : opts) {
    std::string key = name;
    for (auto& ch : key)
      if (ch == '-') ch = '_';
    sub->add_option_function<std::string>(
        std::string("--") + name, [&f, key](const std::string& v) { f.values[key] = v; }, help);
  }
  sub->add_flag("--trace", f.trace, "write per-run loss traces");
  sub->add_flag("--save-models", f.save_models, "serialize fitted models");
  sub->add_option("--set", f.sets, "extra key=value override (repeatable)");
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("TAILFLOW_SEED");
  if (!s || !*s) return std::nullopt;
  const auto seeds = parse_seed_list(s);
  if (seeds.size() != 1) throw ConfigError("TAILFLOW_SEED must be a single integer");
  return seeds.front();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tail transform flows: density estimation and variational inference experiments"};
  app.require_subcommand(1);
  Flags flags;
  const std::pair<Command, const char*> commands[] = {
      {Command::de_synth, "density estimation on synthetic Student-T data"},
      {Command::vi_synth, "variational inference on the synthetic target"},
      {Command::de_csv, "density estimation on a numeric CSV"},
      {Command::nnreg, "MLP regression with heavy-tailed inputs"},
      {Command::tail_est, "per-column tail index estimates for a numeric CSV"},
  };
  std::vector<std::pair<CLI::App*, Command>> subs;
  for (const auto& [cmd, help] : commands) {
    CLI::App* sub = app.add_subcommand(to_string(cmd), help);
    add_flags(sub, flags);
    subs.emplace_back(sub, cmd);
  }
  CLI11_PARSE(app, argc, argv);

  try {
    Command cmd = Command::de_synth;
    for (const auto& [sub, c] : subs)
      if (sub->parsed()) cmd = c;
    RawConfig raw;
    if (!flags.config.empty()) raw = parse_config_file(flags.config, cmd);
    for (const auto& [k, v] : flags.values) raw[k] = v;
    for (const auto& s : flags.sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      const auto extra = parse_config_text(s, cmd);
      for (const auto& [k, v] : extra) raw[k] = v;
    }
    if (flags.trace) raw["trace"] = "true";
    if (flags.save_models) raw["save_models"] = "true";
    const ExperimentConfig cfg = resolve(cmd, raw, env_seed());
    return run(cfg, std::cout);
  } catch (const ConfigError& e) {
    std::cerr << "tailflow: " << e.what() << '\n';
    return 64;
  } catch (const std::exception& e) {
    std::cerr << "tailflow: " << e.what() << '\n';
    return 1;
  }
}
