#pragma once

#include <iosfwd>
#include <string>

#include "tailflow/flows/flow_model.hpp"

namespace tailflow::flows {

inline constexpr int kModelFormatVersion = 1;

/// Versioned text record: architecture name, dimension, options, COMET
/// marginals if any, then every parameter value and frozen flag. Doubles are
/// written in shortest round-trip form, so loading reproduces the model bit
/// for bit.
void save_model(const FlowModel& model, std::ostream& out);
FlowModel load_model(std::istream& in);

void save_model(const FlowModel& model, const std::string& path);
FlowModel load_model(const std::string& path);

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);
/// Parses the output of format_double (also inf/nan); throws on garbage.
double parse_double(const std::string& s);

}  // namespace tailflow::flows
