#include "necplus/csv_io.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "necplus/error.hpp"
#include "necplus/kv.hpp"

namespace necplus {

namespace {

int parse_fixed(std::string_view text, std::size_t pos, std::size_t len) {
  if (pos + len > text.size()) throw Error(ErrorKind::InvalidInput, "truncated timestamp");
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    const char c = text[i];
    if (c < '0' || c > '9') {
      throw Error(ErrorKind::InvalidInput, "bad timestamp '" + std::string(text) + "'");
    }
    v = v * 10 + (c - '0');
  }
  return v;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

std::int64_t parse_timestamp(std::string_view raw) {
  const std::string text = trim(raw);
  std::string_view t(text);
  if (t.size() < 13 || t[4] != '-' || t[7] != '-' || (t[10] != 'T' && t[10] != ' ')) {
    throw Error(ErrorKind::InvalidInput, "bad timestamp '" + text + "'");
  }
  const int year = parse_fixed(t, 0, 4);
  const int month = parse_fixed(t, 5, 2);
  const int day = parse_fixed(t, 8, 2);
  const int hour = parse_fixed(t, 11, 2);
  std::size_t pos = 13;
  int minute = 0;
  int second = 0;
  if (pos < t.size() && t[pos] == ':') {
    minute = parse_fixed(t, pos + 1, 2);
    pos += 3;
    if (pos < t.size() && t[pos] == ':') {
      second = parse_fixed(t, pos + 1, 2);
      pos += 3;
    }
  }
  if (pos < t.size() && t[pos] == 'Z') ++pos;
  if (pos != t.size()) throw Error(ErrorKind::InvalidInput, "bad timestamp '" + text + "'");
  if (minute != 0 || second != 0) {
    throw Error(ErrorKind::InvalidInput, "timestamp '" + text + "' is not on the hour");
  }
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                           std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok() || hour > 23) {
    throw Error(ErrorKind::InvalidInput, "invalid date '" + text + "'");
  }
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + hour * kSecondsPerHour;
}

std::string format_timestamp(std::int64_t epoch_seconds) {
  using namespace std::chrono;
  std::int64_t days = epoch_seconds / 86400;
  std::int64_t rem = epoch_seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / 3600), static_cast<int>((rem % 3600) / 60),
                static_cast<int>(rem % 60));
  return buf;
}

bool SeriesTable::has_column(std::string_view name) const {
  for (const auto& c : columns) {
    if (c == name) return true;
  }
  return false;
}

RawSeries SeriesTable::series(std::string_view name, std::string sensor_id) const {
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c] != name) continue;
    RawSeries s;
    s.sensor_id = sensor_id.empty() ? std::string(name) : std::move(sensor_id);
    s.timestamps = timestamps;
    s.values = data[c];
    s.missing.resize(s.values.size());
    for (std::size_t i = 0; i < s.values.size(); ++i) s.missing[i] = std::isnan(s.values[i]);
    s.validate();
    return s;
  }
  throw Error(ErrorKind::Schema, "input has no column '" + std::string(name) + "'");
}

SeriesTable read_series_table(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw Error(ErrorKind::Schema, path.string() + " is empty");
  auto header = split(lines.front(), ',');
  for (auto& h : header) h = trim(h);
  if (header.size() < 2 || header[0] != "timestamp") {
    throw Error(ErrorKind::Schema, path.string() + ": header must start with 'timestamp,'");
  }
  SeriesTable table;
  table.columns.assign(header.begin() + 1, header.end());
  table.data.resize(table.columns.size());
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto fields = split(lines[r], ',');
    if (fields.size() != header.size()) {
      throw Error(ErrorKind::Schema, path.string() + ": row " + std::to_string(r) + " has " +
                                         std::to_string(fields.size()) + " fields, expected " +
                                         std::to_string(header.size()));
    }
    table.timestamps.push_back(parse_timestamp(fields[0]));
    for (std::size_t c = 1; c < fields.size(); ++c) {
      const std::string f = trim(fields[c]);
      table.data[c - 1].push_back(f.empty() ? std::nan("") : parse_double(f));
    }
  }
  for (std::size_t i = 1; i < table.timestamps.size(); ++i) {
    if (table.timestamps[i] - table.timestamps[i - 1] != kSecondsPerHour) {
      throw Error(ErrorKind::InvalidInput, path.string() + ": timestamps not continuous hourly at " +
                                               format_timestamp(table.timestamps[i]));
    }
  }
  return table;
}

void write_series_table(const std::filesystem::path& path, const SeriesTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "timestamp";
  for (const auto& c : table.columns) out << ',' << c;
  out << '\n';
  for (std::size_t r = 0; r < table.timestamps.size(); ++r) {
    out << format_timestamp(table.timestamps[r]);
    for (const auto& col : table.data) {
      out << ',';
      if (!std::isnan(col[r])) out << format_double(col[r]);
    }
    out << '\n';
  }
}

void write_standardized_csv(const std::filesystem::path& path, const StandardizedSeries& series,
                            const ExtremeLabels& labels) {
  if (labels.labels.size() != series.size()) {
    throw Error(ErrorKind::Dimension, "labels do not match standardized series length");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "timestamp,std_value,is_extreme\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    out << format_timestamp(series.timestamp_at(i)) << ',' << format_double(series.values[i]) << ','
        << (labels.labels[i] ? 1 : 0) << '\n';
  }
}

StandardizedRows read_standardized_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || trim(lines.front()) != "timestamp,std_value,is_extreme") {
    throw Error(ErrorKind::Schema, path.string() + ": expected header timestamp,std_value,is_extreme");
  }
  StandardizedRows rows;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto fields = split(lines[r], ',');
    if (fields.size() != 3) {
      throw Error(ErrorKind::Schema, path.string() + ": malformed row " + std::to_string(r));
    }
    rows.timestamps.push_back(parse_timestamp(fields[0]));
    rows.values.push_back(parse_double(fields[1]));
    rows.extreme.push_back(parse_int(fields[2]) != 0);
  }
  return rows;
}

}  // namespace necplus
