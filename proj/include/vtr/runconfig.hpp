#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace vtr::data {

// Flat key=value run configuration ('#' starts a comment). Every key has a
// documented default; unknown keys are rejected.
struct KeySpec {
  const char* name;
  const char* def;
  const char* doc;
};

class RunConfig {
 public:
  RunConfig();  // all defaults

  static RunConfig from_file(const std::string& path);
  static const std::vector<KeySpec>& known_keys();

  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }

  // FNV-1a over the canonical "key=value\n" serialization.
  std::string hash() const;
  std::string serialize() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace vtr::data
