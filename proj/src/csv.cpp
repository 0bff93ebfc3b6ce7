#include "advlab/csv.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "advlab/error.hpp"

namespace advlab {

namespace {

std::string to_chars_general(double v, int precision) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, precision);
  return std::string(buf, res.ptr);
}

// Splits one record; cells may be double-quoted with "" as an escaped quote.
std::vector<std::string> split_line(const std::string& line, std::size_t lineno) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  require(!quoted, ErrorKind::Io, "unterminated quote at line " + std::to_string(lineno));
  cells.push_back(std::move(cell));
  return cells;
}

}  // namespace

std::string format_number(double v) { return to_chars_general(v, 9); }

std::string csv_quote(const std::string& cell) {
  if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_exact(double v) { return to_chars_general(v, 17); }

std::string metrics_row(const IterationMetrics& m) {
  std::string row = std::to_string(m.step);
  for (double v : {m.reward_mean, m.kl_ref, m.adv_mean, m.adv_std, m.clip_frac, m.eval_reward, m.pass_at_n}) {
    row += ',';
    row += format_number(v);
  }
  return row;
}

MetricsCsvWriter::MetricsCsvWriter(const std::filesystem::path& path) : path_(path), out_(path) {
  require(static_cast<bool>(out_), ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out_ << kMetricsHeader << '\n';
  out_.flush();
  require(static_cast<bool>(out_), ErrorKind::Io, "write failed: " + path_.string());
}

void MetricsCsvWriter::write(const IterationMetrics& m) {
  out_ << metrics_row(m) << '\n';
  out_.flush();
  require(static_cast<bool>(out_), ErrorKind::Io, "write failed: " + path_.string());
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw Error(ErrorKind::Io, "missing CSV column '" + name + "'");
}

double CsvTable::number(std::size_t row, const std::string& name) const {
  const std::string& cell = rows.at(row).at(column(name));
  double v = 0.0;
  auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  require(res.ec == std::errc() && res.ptr == cell.data() + cell.size(), ErrorKind::Io,
          "non-numeric CSV cell '" + cell + "' in column " + name);
  return v;
}

CsvTable read_csv_strict(std::istream& in) {
  CsvTable t;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::Io, "CSV has no header");
  t.header = split_line(line, 1);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    auto cells = split_line(line, lineno);
    require(cells.size() == t.header.size(), ErrorKind::Io, "ragged CSV row at line " + std::to_string(lineno));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

CsvTable read_csv_strict(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  return read_csv_strict(in);
}

}  // namespace advlab
