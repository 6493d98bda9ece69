#include "psel/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "psel/errors.hpp"

namespace psel {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw, std::size_t line_no) {
  const std::string cell = trim(raw);
  double value = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(value)) {
    fail(ErrorCode::InvalidArgument, "malformed number '" + cell + "' on line " + std::to_string(line_no));
  }
  return value;
}

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

std::string render_csv(const CsvRow& header, const std::vector<CsvRow>& rows) {
  std::string out;
  auto emit = [&out](const CsvRow& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += row[i];
    }
    out += '\n';
  };
  emit(header);
  for (const auto& row : rows) emit(row);
  return out;
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::InvalidArgument, "cannot write " + path);
  out << contents;
  if (!out) fail(ErrorCode::InvalidArgument, "cannot write " + path);
}

ObservationSet parse_observations_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_line(line);
      break;
    }
  }
  if (header.empty()) fail(ErrorCode::InvalidArgument, "observation CSV is empty");
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (trim(header[j]) != "pop_" + std::to_string(j + 1)) {
      fail(ErrorCode::InvalidArgument, "observation CSV header must be pop_1..pop_M, got '" + trim(header[j]) + "'");
    }
  }
  ObservationSet x;
  x.populations.assign(header.size(), {});
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      fail(ErrorCode::InvalidArgument, "line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                                           " fields, expected " + std::to_string(header.size()));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) x.populations[j].push_back(parse_cell(cells[j], line_no));
  }
  if (x.populations.front().empty()) fail(ErrorCode::InvalidArgument, "observation CSV has no data rows");
  return x;
}

ObservationSet read_observations_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::InvalidArgument, "cannot open data file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_observations_csv(text.str());
}

}  // namespace psel
