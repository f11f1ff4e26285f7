#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "necplus/series.hpp"

namespace necplus {

/// Accepts `YYYY-MM-DDTHH[:MM[:SS]][Z]` with either `T` or a space as the
/// separator. Minutes and seconds must be zero (hour resolution).
std::int64_t parse_timestamp(std::string_view text);
std::string format_timestamp(std::int64_t epoch_seconds);

/// `timestamp,value[,extra...]` table. Empty fields are missing values and
/// are stored as NaN.
struct SeriesTable {
  std::vector<std::int64_t> timestamps;
  std::vector<std::string> columns;  // excludes the timestamp column
  std::vector<std::vector<double>> data;

  bool has_column(std::string_view name) const;
  /// Column as a validated RawSeries (hourly cadence enforced).
  RawSeries series(std::string_view name, std::string sensor_id = {}) const;
};

SeriesTable read_series_table(const std::filesystem::path& path);
void write_series_table(const std::filesystem::path& path, const SeriesTable& table);

/// `timestamp,std_value,is_extreme`
void write_standardized_csv(const std::filesystem::path& path, const StandardizedSeries& series,
                            const ExtremeLabels& labels);
struct StandardizedRows {
  std::vector<std::int64_t> timestamps;
  std::vector<double> values;
  std::vector<bool> extreme;
};
StandardizedRows read_standardized_csv(const std::filesystem::path& path);

}  // namespace necplus
