#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "ojkd/error.hpp"

namespace ojkd {

struct ColumnStats {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, n - 1 denominator
};

struct Aggregate {
  std::vector<ColumnStats> columns;
  bool single_seed = false;  // std reported as 0 by convention
};

/// Column-wise mean and sample standard deviation of a seed x cycle matrix.
/// A single row yields std = 0 and sets `single_seed`.
inline Aggregate aggregate(const std::vector<std::vector<double>>& matrix) {
  if (matrix.empty()) throw ConfigError("aggregate: no rows");
  const std::size_t cols = matrix.front().size();
  for (std::size_t r = 0; r < matrix.size(); ++r)
    if (matrix[r].size() != cols)
      throw ConfigError("aggregate: ragged input; row " + std::to_string(r) + " has " +
                        std::to_string(matrix[r].size()) + " columns, expected " + std::to_string(cols));
  Aggregate out;
  out.single_seed = matrix.size() == 1;
  const double n = static_cast<double>(matrix.size());
  for (std::size_t c = 0; c < cols; ++c) {
    double s = 0.0;
    for (const auto& row : matrix) s += row[c];
    const double mu = s / n;
    double ss = 0.0;
    for (const auto& row : matrix) ss += (row[c] - mu) * (row[c] - mu);
    out.columns.push_back({mu, matrix.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0});
  }
  return out;
}

struct ReportRow {
  std::size_t cycle = 0;
  std::size_t labeled_count = 0;
  double mean_acc = 0.0;
  double std_acc = 0.0;
  std::string head;  // original | fr
  std::string variant;
  std::string strategy;
  std::string config_hash;
};

inline const char* kReportHeader = "cycle,labeled_count,mean_acc,std_acc,head,variant,strategy,config_hash";

inline std::string format_fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string to_csv(const std::vector<ReportRow>& rows) {
  std::string out = std::string(kReportHeader) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.cycle) + "," + std::to_string(r.labeled_count) + "," + format_fixed(r.mean_acc) +
           "," + format_fixed(r.std_acc) + "," + r.head + "," + r.variant + "," + r.strategy + "," +
           r.config_hash + "\n";
  }
  return out;
}

}  // namespace ojkd
