#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace htomo {

/// Formats with 17 significant digits so doubles survive a text round trip.
std::string format_double(double v);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& header);

  template <typename... Ts>
  void row(Ts... fields) {
    bool first = true;
    ((write_field(fields, first)), ...);
    out_ << '\n';
  }
  void close();

 private:
  void write_field(double v, bool& first);
  void write_field(std::size_t v, bool& first);
  void write_field(int v, bool& first);
  std::ofstream out_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const;
};

/// Numeric CSV with a single header line.
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace htomo
