#pragma once

#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <string>
#include <vector>

#include "advlab/trainer.hpp"

namespace advlab {

/// Shortest "%.9g"-style rendering, independent of the global locale.
std::string format_number(double v);
/// Quotes a cell if it contains a comma, quote or newline.
std::string csv_quote(const std::string& cell);
/// Full round-trip precision (17 significant digits), locale independent.
std::string format_exact(double v);

inline constexpr const char* kMetricsHeader = "step,reward_mean,kl_ref,adv_mean,adv_std,clip_frac,eval_reward,pass_at_n";

std::string metrics_row(const IterationMetrics& m);

/// Streams metrics to a CSV file, flushing after every row.
class MetricsCsvWriter {
 public:
  explicit MetricsCsvWriter(const std::filesystem::path& path);
  void write(const IterationMetrics& m);

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

/// Comma-separated table with optional double-quoted cells; throws Error(Io)
/// on ragged rows or unparsable numeric cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
  double number(std::size_t row, const std::string& name) const;
};

CsvTable read_csv_strict(std::istream& in);
CsvTable read_csv_strict(const std::filesystem::path& path);

}  // namespace advlab
