#pragma once

#include <ostream>

#include "config.hpp"

namespace tailflow::cli {

/// Executes one configured experiment and writes its artifacts under
/// cfg.out_dir. Returns the process exit code; completed cells are written
/// even when others fail.
int run(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace tailflow::cli
