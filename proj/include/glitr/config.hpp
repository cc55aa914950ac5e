#pragma once

// Flat key=value configuration: a UTF-8 text file with one pair per line,
// '#' comments, later assignments override earlier ones. CLI flags layer on
// top. Runs write back a sorted snapshot so results are reproducible.

#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace glitr {

class Config {
 public:
  Config() = default;

  static Config from_file(const std::filesystem::path& path);
  void merge_file(const std::filesystem::path& path);

  // "key=value" form, used by --set overrides
  void set_pair(const std::string& pair);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& def) const;
  int get_int(const std::string& key, int def) const;
  long long get_int64(const std::string& key, long long def) const;
  double get_double(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;

  // throws on keys outside the allowed set (typo guard)
  void validate_keys(const std::set<std::string>& allowed) const;

  // sorted key=value lines
  std::string snapshot() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace glitr
