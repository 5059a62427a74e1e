#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "tailflow/flows/flow_model.hpp"
#include "tailflow/flows/serialization.hpp"

namespace tailflow::cli {

namespace {

struct CommandName {
  Command command;
  const char* name;
};

constexpr CommandName kCommands[] = {{Command::de_synth, "de-synth"},
                                     {Command::vi_synth, "vi-synth"},
                                     {Command::de_csv, "de-csv"},
                                     {Command::nnreg, "nnreg"},
                                     {Command::tail_est, "tail-est"}};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError("config key '" + key + "': " + what);
}

}  // namespace

const char* to_string(Command c) {
  for (const auto& e : kCommands)
    if (e.command == c) return e.name;
  return "?";
}

Command command_from_string(const std::string& s) {
  for (const auto& e : kCommands)
    if (s == e.name) return e.command;
  throw ConfigError("unknown command '" + s + "'");
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys{
      "command", "flow",       "d",          "nu",     "seeds",          "n",
      "lr",      "batch",      "epochs",     "patience", "clip_norm",
      "diagnostic_samples",    "activation", "hidden", "lu_layer",       "bootstrap_reps",
      "jobs",    "input",      "out_dir",    "trace",  "save_models",    "divergence_threshold"};
  return keys;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(s)) {
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      out.push_back(to_u64("seeds", item));
      continue;
    }
    const std::uint64_t a = to_u64("seeds", trim(item.substr(0, dots)));
    const std::uint64_t b = to_u64("seeds", trim(item.substr(dots + 2)));
    require(a <= b, "seeds", "range '" + item + "' runs backwards");
    require(b - a < 100000, "seeds", "range '" + item + "' is too long");
    for (std::uint64_t v = a; v <= b; ++v) out.push_back(v);
  }
  require(!out.empty(), "seeds", "no seeds given");
  return out;
}

RawConfig parse_config_text(const std::string& text, std::optional<Command> command) {
  RawConfig raw;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool active = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
      const Command sec = command_from_string(trim(line.substr(1, line.size() - 2)));
      active = !command || sec == *command;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& keys = known_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw ConfigError("unknown config key '" + key + "'");
    if (active) raw[key] = value;
  }
  return raw;
}

RawConfig parse_config_file(const std::string& path, std::optional<Command> command) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), command);
}

ExperimentConfig resolve(Command command, const RawConfig& raw, std::optional<std::uint64_t> seed_fallback) {
  ExperimentConfig c;
  c.command = command;
  switch (command) {
    case Command::de_synth:
    case Command::de_csv:
      c.train.learning_rate = 5e-3;
      c.train.batch_size = 0;
      break;
    case Command::vi_synth:
      c.train.learning_rate = 1e-3;
      c.train.batch_size = 100;
      c.train.vi_samples = 100;
      c.train.max_epochs = 10000;
      break;
    case Command::nnreg:
      c.train.learning_rate = 1e-3;
      c.train.batch_size = 100;
      c.train.max_epochs = 200;
      c.train.patience = 20;
      c.nu = 30.0;
      c.activations = {flows::Activation::sigmoid, flows::Activation::relu};
      break;
    case Command::tail_est:
      break;
  }
  if (seed_fallback) c.seeds = {*seed_fallback};

  for (const auto& [key, v] : raw) {
    if (key == "command") {
      require(command_from_string(v) == command, key, "'" + v + "' does not match the command being run");
    } else if (key == "flow") {
      c.flows = split_list(v);
      require(!c.flows.empty(), key, "no flow given");
      const auto& names = flows::architecture_names();
      for (const auto& f : c.flows)
        require(std::find(names.begin(), names.end(), f) != names.end(), key, "unknown flow '" + f + "'");
    } else if (key == "d") {
      c.d = to_u64(key, v);
    } else if (key == "nu") {
      c.nu = to_real(key, v);
    } else if (key == "seeds") {
      c.seeds = parse_seed_list(v);
    } else if (key == "n") {
      c.n = to_u64(key, v);
    } else if (key == "lr") {
      c.train.learning_rate = to_real(key, v);
    } else if (key == "batch") {
      c.train.batch_size = (v == "full" || v == "none") ? 0 : to_u64(key, v);
    } else if (key == "epochs") {
      c.train.max_epochs = to_u64(key, v);
    } else if (key == "patience") {
      c.train.patience = to_u64(key, v);
    } else if (key == "clip_norm") {
      if (v == "none" || v.empty())
        c.train.clip_norm.reset();
      else
        c.train.clip_norm = to_real(key, v);
    } else if (key == "divergence_threshold") {
      c.train.divergence_threshold = to_real(key, v);
    } else if (key == "diagnostic_samples") {
      c.diagnostic_samples = to_u64(key, v);
    } else if (key == "activation") {
      c.activations.clear();
      for (const auto& a : split_list(v)) {
        try {
          c.activations.push_back(flows::activation_from_string(a));
        } catch (const std::exception&) {
          throw ConfigError("config key 'activation': unknown activation '" + a + "'");
        }
      }
      require(!c.activations.empty(), key, "no activation given");
    } else if (key == "hidden") {
      c.hidden = to_u64(key, v);
    } else if (key == "lu_layer") {
      c.lu_layer = to_bool(key, v);
    } else if (key == "bootstrap_reps") {
      c.bootstrap_reps = to_u64(key, v);
    } else if (key == "jobs") {
      c.jobs = to_u64(key, v);
    } else if (key == "input") {
      c.input = v;
    } else if (key == "out_dir") {
      c.out_dir = v;
    } else if (key == "trace") {
      c.trace = to_bool(key, v);
    } else if (key == "save_models") {
      c.save_models = to_bool(key, v);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }

  if (command == Command::vi_synth) {
    // one step averages the ELBO gradient over `batch` draws
    require(c.train.batch_size > 0, "batch", "vi-synth needs a sample count, not a full pass");
    c.train.vi_samples = c.train.batch_size;
  }
  require(c.d >= (command == Command::nnreg ? 1u : 2u) || command == Command::de_csv || command == Command::tail_est,
          "d", "too small for this command");
  require(c.nu > 0.0, "nu", "must be positive");
  require(c.jobs >= 1, "jobs", "must be at least 1");
  require(c.n >= 10, "n", "must be at least 10");
  require(c.diagnostic_samples >= 100, "diagnostic_samples", "must be at least 100");
  require(c.bootstrap_reps >= 10, "bootstrap_reps", "must be at least 10");
  require(!c.out_dir.empty(), "out_dir", "must not be empty");
  if (command != Command::nnreg) require(c.activations.size() == 1, "activation", "flows take a single activation");
  if (command == Command::de_csv || command == Command::tail_est) {
    require(!c.input.empty(), "input", "required for " + std::string(to_string(command)));
    std::ifstream probe(c.input);
    require(static_cast<bool>(probe), "input", "cannot read '" + c.input + "'");
  }
  if (command == Command::vi_synth)
    for (const auto& f : c.flows) require(f != "COMET", "flow", "COMET has no VI variant");
  try {
    c.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("training settings: ") + e.what());
  }
  return c;
}

std::string to_text(const ExperimentConfig& c) {
  auto join = [](const auto& items, auto fmt) {
    std::string s;
    for (const auto& it : items) {
      if (!s.empty()) s += ',';
      s += fmt(it);
    }
    return s;
  };
  std::ostringstream o;
  o << "command = " << to_string(c.command) << '\n';
  o << "flow = " << join(c.flows, [](const std::string& f) { return f; }) << '\n';
  o << "d = " << c.d << '\n';
  o << "nu = " << flows::format_double(c.nu) << '\n';
  o << "seeds = " << join(c.seeds, [](std::uint64_t s) { return std::to_string(s); }) << '\n';
  o << "n = " << c.n << '\n';
  o << "lr = " << flows::format_double(c.train.learning_rate) << '\n';
  o << "batch = " << (c.train.batch_size == 0 ? std::string("full") : std::to_string(c.train.batch_size)) << '\n';
  o << "epochs = " << c.train.max_epochs << '\n';
  o << "patience = " << c.train.patience << '\n';
  o << "clip_norm = " << (c.train.clip_norm ? flows::format_double(*c.train.clip_norm) : std::string("none")) << '\n';
  o << "divergence_threshold = " << flows::format_double(c.train.divergence_threshold) << '\n';
  o << "diagnostic_samples = " << c.diagnostic_samples << '\n';
  o << "activation = " << join(c.activations, [](flows::Activation a) { return std::string(flows::to_string(a)); })
    << '\n';
  o << "hidden = " << c.hidden << '\n';
  o << "lu_layer = " << (c.lu_layer ? "true" : "false") << '\n';
  o << "bootstrap_reps = " << c.bootstrap_reps << '\n';
  o << "jobs = " << c.jobs << '\n';
  o << "input = " << c.input << '\n';
  o << "out_dir = " << c.out_dir << '\n';
  o << "trace = " << (c.trace ? "true" : "false") << '\n';
  o << "save_models = " << (c.save_models ? "true" : "false") << '\n';
  return o.str();
}

}  // namespace tailflow::cli
