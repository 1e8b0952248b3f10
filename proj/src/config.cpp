#include "ncdeon/config.hpp"

#include <fstream>
#include <sstream>

namespace ncdeon {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw io_error("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), path);
}

Config Config::parse(const std::string& text, const std::string& origin) {
  Config c;
  std::istringstream in(text);
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw value_error(strf("%s:%d: expected 'key = value', got: ",
                             origin.c_str(), ln) + line);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw value_error(strf("%s:%d: empty key", origin.c_str(), ln));
    if (c.kv_.count(key))
      throw value_error(strf("%s:%d: duplicate key '%s'", origin.c_str(), ln,
                             key.c_str()));
    c.kv_[key] = value;
  }
  return c;
}

std::string Config::str(const std::string& key, const std::string& dflt) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? dflt : it->second;
}

double Config::num(const std::string& key, double dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  size_t pos = 0;
  double v;
  try {
    v = std::stod(it->second, &pos);
  } catch (const std::exception&) {
    throw value_error("config: '" + key + "' is not a number: " + it->second);
  }
  if (pos != it->second.size())
    throw value_error("config: '" + key + "' is not a number: " + it->second);
  return v;
}

long long Config::integer(const std::string& key, long long dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  size_t pos = 0;
  long long v;
  try {
    v = std::stoll(it->second, &pos);
  } catch (const std::exception&) {
    throw value_error("config: '" + key + "' is not an integer: " + it->second);
  }
  if (pos != it->second.size())
    throw value_error("config: '" + key + "' is not an integer: " + it->second);
  return v;
}

void Config::ensure_known(const std::set<std::string>& known) const {
  for (auto& [k, v] : kv_)
    if (!known.count(k))
      throw value_error("config: unknown key '" + k + "'");
}

}  // namespace ncdeon
