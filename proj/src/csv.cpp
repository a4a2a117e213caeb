#include "htomo/csv.hpp"

#include <cstdio>
#include <sstream>

#include "htomo/error.hpp"

namespace htomo {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::string& header)
    : out_(path, std::ios::binary) {
  if (!out_) throw FormatError(FormatErrc::io_failure, "cannot open " + path.string());
  out_ << header << '\n';
}

void CsvWriter::close() {
  out_.close();
  if (out_.fail()) throw FormatError(FormatErrc::io_failure, "write failed");
}

void CsvWriter::write_field(double v, bool& first) {
  if (!first) out_ << ',';
  first = false;
  out_ << format_double(v);
}

void CsvWriter::write_field(std::size_t v, bool& first) {
  if (!first) out_ << ',';
  first = false;
  out_ << v;
}

void CsvWriter::write_field(int v, bool& first) {
  if (!first) out_ << ',';
  first = false;
  out_ << v;
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw FormatError(FormatErrc::invalid_value, "missing CSV column " + name);
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatErrc::io_failure, "cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw FormatError(FormatErrc::truncated, "empty CSV");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.header.push_back(cell);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw FormatError(FormatErrc::invalid_value, "non-numeric CSV cell '" + cell + "'");
      }
    }
    if (row.size() != t.header.size())
      throw FormatError(FormatErrc::invalid_value, "CSV row width does not match header");
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace htomo
