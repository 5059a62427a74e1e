#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "tailflow/matrix.hpp"

namespace tailflow::csv {

struct NumericTable {
  std::vector<std::string> header;
  Matrix data;
};

/// Headered, comma-separated numeric data, one observation per row. Blank
/// lines are skipped. Throws std::runtime_error naming the line on bad input.
NumericTable read_numeric(std::istream& in);
NumericTable read_numeric(const std::string& path);

void write_numeric(std::ostream& out, const NumericTable& table);
void write_numeric(const std::string& path, const NumericTable& table);

/// Splits one line on commas; surrounding whitespace is trimmed.
std::vector<std::string> split_line(const std::string& line);

}  // namespace tailflow::csv
