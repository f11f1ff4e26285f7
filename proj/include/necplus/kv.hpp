#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace necplus {

/// Flat `key=value` text container. Insertion order is preserved so that
/// serialized files are byte-stable; `#` starts a comment line.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text);
  static KeyValues read_file(const std::filesystem::path& path);

  void set(std::string key, std::string value);
  void set(std::string key, double value);
  void set(std::string key, std::int64_t value);
  void set(std::string key, const std::vector<double>& values);

  bool contains(std::string_view key) const;
  const std::string& get(std::string_view key) const;
  std::optional<std::string> find(std::string_view key) const;

  double get_double(std::string_view key) const;
  std::int64_t get_int(std::string_view key) const;
  std::vector<double> get_doubles(std::string_view key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string to_string() const;
  void write_file(const std::filesystem::path& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Shortest representation that parses back to the identical double.
std::string format_double(double value);
double parse_double(std::string_view text);
std::int64_t parse_int(std::string_view text);

std::string trim(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);

// FNV-1a, used to tie checkpoints to the config they were trained with.
std::uint64_t fnv1a64(std::string_view data);

}  // namespace necplus
