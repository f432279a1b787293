#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace evtrack {

/// Raised for unknown keys or values that do not parse as the key's type.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ValueKind { real, integer, boolean, text };

struct ConfigKey {
  std::string name;
  ValueKind kind;
  std::string default_value;
  std::string help;
};

/// Every recognised key with its default. Groups: camera.*, sim.*, flow.*,
/// vel.*, pose.*, run.*. Noise terms are given as standard deviations.
const std::vector<ConfigKey>& config_schema();

/// Flat dotted key/value configuration. Values are kept as text and parsed on
/// access, so a config round-trips exactly through files and manifests.
class Config {
 public:
  /// All keys at their defaults.
  Config();

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);
  /// Applies every entry; unknown keys are rejected.
  void merge(const std::map<std::string, std::string>& entries);
  /// Reads `key = value` lines; '#' starts a comment.
  void load_file(const std::filesystem::path& path);

  const std::string& text(const std::string& key) const;
  double real(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  std::uint64_t unsigned_integer(const std::string& key) const;
  bool boolean(const std::string& key) const;

  const std::map<std::string, std::string>& entries() const { return values_; }
  /// Entries whose key starts with `prefix`.
  std::map<std::string, std::string> group(const std::string& prefix) const;
  std::string to_text() const;

 private:
  const ConfigKey& key_info(const std::string& key) const;

  std::map<std::string, std::string> values_;
};

}  // namespace evtrack
