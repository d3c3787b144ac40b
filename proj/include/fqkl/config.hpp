#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace fqkl {

/// Flat key=value configuration with dotted sections. Every key known to the
/// schema has a default; unknown keys in a file are hard errors so typos
/// cannot silently fall back to defaults.
class KvConfig {
 public:
  /// All keys at their documented defaults.
  static KvConfig defaults();
  /// Defaults overridden by `key=value` lines ('#' starts a comment).
  static KvConfig from_file(const std::filesystem::path& path);
  static KvConfig from_text(std::string_view text, const std::string& origin = "<text>");

  bool has(std::string_view key) const;
  const std::string& raw(std::string_view key) const;
  void set(std::string_view key, std::string value);  // key must exist in the schema

  std::string get_str(std::string_view key) const;
  std::int64_t get_int(std::string_view key) const;
  std::uint64_t get_u64(std::string_view key) const;
  double get_double(std::string_view key) const;
  bool get_bool(std::string_view key) const;
  std::vector<std::size_t> get_size_list(std::string_view key) const;
  std::vector<std::string> get_str_list(std::string_view key) const;

  /// The key's value, or a ConfigError naming the key when it is empty.
  std::string require(std::string_view key, const std::string& why) const;

  /// Sorted `key=value` lines covering the whole schema (the
  /// `config.resolved` artifact).
  std::string resolved_text() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace fqkl
