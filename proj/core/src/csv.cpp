#include "tailflow/csv.hpp"

#include <fstream>
#include <stdexcept>

#include "tailflow/flows/serialization.hpp"

namespace tailflow::csv {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

NumericTable read_numeric(std::istream& in) {
  NumericTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    t.header = split_line(line);
    break;
  }
  if (t.header.empty()) throw std::runtime_error("csv: missing header");
  std::vector<double> row(t.header.size());
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != t.header.size())
      throw std::runtime_error("csv: line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                               " fields, expected " + std::to_string(t.header.size()));
    for (std::size_t j = 0; j < cells.size(); ++j) {
      try {
        row[j] = flows::parse_double(cells[j]);
      } catch (const std::exception&) {
        throw std::runtime_error("csv: line " + std::to_string(lineno) + ": '" + cells[j] + "' is not a number");
      }
    }
    t.data.append_row(row);
  }
  if (t.data.empty()) t.data = Matrix(0, t.header.size());
  return t;
}

NumericTable read_numeric(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_numeric(in);
}

void write_numeric(std::ostream& out, const NumericTable& t) {
  for (std::size_t j = 0; j < t.header.size(); ++j) out << (j ? "," : "") << t.header[j];
  out << '\n';
  for (std::size_t r = 0; r < t.data.rows(); ++r) {
    for (std::size_t j = 0; j < t.data.cols(); ++j) out << (j ? "," : "") << flows::format_double(t.data(r, j));
    out << '\n';
  }
}

void write_numeric(const std::string& path, const NumericTable& t) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_numeric(out, t);
}

}  // namespace tailflow::csv
