#include "rasterfix/csv.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "rasterfix/error.hpp"

namespace rasterfix {

std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size(),
          ErrorCode::invalid_argument, "CSV: cannot parse number '" + s + "'");
  return v;
}

CsvWriter::CsvWriter(const std::filesystem::path& path,
                     const std::vector<std::string>& header)
    : out_(path) {
  require(out_.good(), ErrorCode::io_failure, "cannot open for writing: " + path.string());
  for (size_t c = 0; c < header.size(); ++c) {
    if (c > 0) out_ << ',';
    out_ << header[c];
  }
  out_ << '\n';
}

CsvWriter::~CsvWriter() {
  if (row_started_) out_ << '\n';
}

CsvWriter& CsvWriter::field(const std::string& s) {
  if (row_started_) out_ << ',';
  out_ << s;
  row_started_ = true;
  return *this;
}

CsvWriter& CsvWriter::field(double v) { return field(format_double(v)); }

CsvWriter& CsvWriter::field(int v) { return field(std::to_string(v)); }

void CsvWriter::end_row() {
  out_ << '\n';
  row_started_ = false;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io_failure, "cannot open: " + path.string());
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (first) {
      table.header = std::move(cells);
      first = false;
    } else {
      table.rows.push_back(std::move(cells));
    }
  }
  return table;
}

}  // namespace rasterfix
