#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace rasterfix {

/// Comma-delimited writer with a header row; numbers use '.' as decimal
/// separator and shortest round-trip formatting, independent of locale.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  ~CsvWriter();

  CsvWriter& field(const std::string& s);
  CsvWriter& field(double v);
  CsvWriter& field(int v);
  void end_row();

 private:
  std::ofstream out_;
  bool row_started_ = false;
};

std::string format_double(double v);

/// Parsed CSV: header row plus string cells per row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::filesystem::path& path);

double parse_double(const std::string& s);

}  // namespace rasterfix
