#pragma once

// Flat key = value configuration text.
//
//   # comment
//   [train]
//   learning_rate = 0.001     -> key "train.learning_rate"
//
// Keys outside any section are used as written. Values run to the end of the
// line (a trailing "# ..." is stripped) and are trimmed.

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace ebmc::config {

class KeyValueConfig {
 public:
  /// Throws ConfigError naming the source and line on malformed input or a
  /// repeated key.
  static KeyValueConfig parse(std::string_view text, const std::string& source = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  /// Raw value; throws ConfigError if missing.
  const std::string& get(const std::string& key) const;
  /// Typed readers. Throw ConfigError naming the key and line on bad values.
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  std::size_t get_count(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;

  void set(const std::string& key, std::string value);
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Throws ConfigError on the first key not in `known`.
  void reject_unknown(const std::set<std::string>& known) const;
  /// Throws ConfigError naming the first missing key.
  void require(const std::vector<std::string>& keys) const;

  /// Canonical text: keys sorted, grouped under "[section]" headers.
  std::string serialize() const;

 private:
  std::string where(const std::string& key) const;

  std::string source_;
  std::map<std::string, std::string> values_;
  std::map<std::string, std::size_t> lines_;
};

}  // namespace ebmc::config
