#pragma once

#include <map>
#include <set>
#include <string>

#include "ncdeon/util.hpp"

namespace ncdeon {

// Flat `key = value` config files, UTF-8, '#' starts a comment, blank lines
// ignored.  Duplicate keys and malformed lines are errors (with line
// numbers); unknown keys are rejected by the caller via ensure_known.
class Config {
 public:
  Config() = default;
  static Config load(const std::string& path);
  static Config parse(const std::string& text, const std::string& origin);

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  std::string str(const std::string& key, const std::string& dflt) const;
  double num(const std::string& key, double dflt) const;
  long long integer(const std::string& key, long long dflt) const;

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  void ensure_known(const std::set<std::string>& known) const;
  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace ncdeon
