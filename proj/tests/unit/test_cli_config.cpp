#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "config.hpp"
#include "doctest.h"
#include "run.hpp"
#include "tailflow/tables.hpp"

using namespace tailflow::cli;

TEST_CASE("defaults per command") {
  const auto de = resolve(Command::de_synth, {});
  CHECK(de.train.learning_rate == 5e-3);
  CHECK(de.train.batch_size == 0);
  const auto vi = resolve(Command::vi_synth, {});
  CHECK(vi.train.learning_rate == 1e-3);
  CHECK(vi.train.batch_size == 100);
  CHECK(vi.train.vi_samples == 100);
  const auto nn = resolve(Command::nnreg, {});
  CHECK(nn.activations.size() == 2);
}

TEST_CASE("unknown keys are rejected by name") {
  try {
    parse_config_text("learning_rte = 0.1\n", Command::de_synth);
    FAIL("no error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("learning_rte") != std::string::npos);
  }
  try {
    resolve(Command::de_synth, {{"epochs", "ten"}});
    FAIL("no error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("epochs") != std::string::npos);
  }
  CHECK_THROWS_AS(resolve(Command::de_synth, {{"flow", "TTX"}}), ConfigError);
  CHECK_THROWS_AS(resolve(Command::de_csv, {}), ConfigError);
  CHECK_THROWS_AS(resolve(Command::vi_synth, {{"flow", "COMET"}}), ConfigError);
}

TEST_CASE("sections scope keys to their command") {
  const std::string text =
      "seeds = 0..2\n"
      "[de-synth]\nlr = 0.01  # comment\n"
      "[vi-synth]\nlr = 0.002\nbatch = 50\n";
  const auto de = resolve(Command::de_synth, parse_config_text(text, Command::de_synth));
  CHECK(de.train.learning_rate == 0.01);
  CHECK(de.seeds == std::vector<std::uint64_t>{0, 1, 2});
  const auto vi = resolve(Command::vi_synth, parse_config_text(text, Command::vi_synth));
  CHECK(vi.train.learning_rate == 0.002);
  CHECK(vi.train.vi_samples == 50);
  CHECK_THROWS_AS(parse_config_text("[fit]\n", Command::de_synth), ConfigError);
}

TEST_CASE("seed lists and the seed fallback") {
  CHECK(parse_seed_list("0..2,7") == std::vector<std::uint64_t>{0, 1, 2, 7});
  CHECK_THROWS_AS(parse_seed_list("3..1"), ConfigError);
  CHECK(resolve(Command::de_synth, {}, 42).seeds == std::vector<std::uint64_t>{42});
  CHECK(resolve(Command::de_synth, {{"seeds", "5"}}, 42).seeds == std::vector<std::uint64_t>{5});
}

TEST_CASE("resolved config round trips through its text form") {
  const auto c = resolve(Command::vi_synth, {{"flow", "TTFfix,gTAF"}, {"nu", "0.3"}, {"clip_norm", "5"}, {"lr", "1.1e-3"}});
  const auto back = resolve(Command::vi_synth, parse_config_text(to_text(c), Command::vi_synth));
  CHECK(to_text(back) == to_text(c));
  CHECK(back.nu == c.nu);
  CHECK(back.train.learning_rate == c.train.learning_rate);
  CHECK(*back.train.clip_norm == 5.0);
}

TEST_CASE("a tiny de-synth run writes its artifacts") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "tailflow_cli_test";
  fs::remove_all(dir);
  const auto c = resolve(Command::de_synth, {{"flow", "TTF"}, {"d", "2"}, {"n", "300"}, {"epochs", "3"},
                                             {"seeds", "0,1"}, {"out_dir", dir.string()}, {"trace", "true"}});
  std::ostringstream log;
  CHECK(run(c, log) == 0);
  for (const char* f : {"results.csv", "lambdas.csv", "summary.csv", "metadata.cfg", "traces/TTF_seed1.csv"})
    CHECK(fs::exists(dir / f));
  std::ifstream in(dir / "results.csv");
  const auto rows = tailflow::experiments::read_results(in);
  CHECK(rows.size() == 8);
  // the metadata reproduces the run
  const auto again = resolve(Command::de_synth, parse_config_file((dir / "metadata.cfg").string(), Command::de_synth));
  CHECK(to_text(again) == to_text(c));
  fs::remove_all(dir);
}
