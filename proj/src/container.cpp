#include "ncdeon/container.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ncdeon {

void Container::set_meta(const std::string& key, const std::string& value) {
  if (key.find_first_of(" \t\n") != std::string::npos)
    throw value_error("Container: meta key may not contain whitespace: " + key);
  if (value.find('\n') != std::string::npos)
    throw value_error("Container: meta value may not contain newlines");
  for (auto& [k, v] : meta)
    if (k == key) {
      v = value;
      return;
    }
  meta.emplace_back(key, value);
}

bool Container::has_meta(const std::string& key) const {
  for (auto& [k, v] : meta)
    if (k == key) return true;
  return false;
}

const std::string& Container::get_meta(const std::string& key) const {
  for (auto& [k, v] : meta)
    if (k == key) return v;
  throw io_error("Container: missing metadata key '" + key + "'");
}

double Container::meta_num(const std::string& key) const {
  const std::string& s = get_meta(key);
  size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw io_error("Container: metadata '" + key + "' is not a number: " + s);
  }
  if (pos != s.size())
    throw io_error("Container: metadata '" + key + "' is not a number: " + s);
  return v;
}

long long Container::meta_int(const std::string& key) const {
  const std::string& s = get_meta(key);
  size_t pos = 0;
  long long v;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    throw io_error("Container: metadata '" + key + "' is not an integer: " + s);
  }
  if (pos != s.size())
    throw io_error("Container: metadata '" + key + "' is not an integer: " + s);
  return v;
}

void Container::add_array(const std::string& name, Tensor t) {
  if (name.find_first_of(" \t\n") != std::string::npos)
    throw value_error("Container: array name may not contain whitespace: " + name);
  for (auto& a : arrays)
    if (a.name == name)
      throw value_error("Container: duplicate array '" + name + "'");
  arrays.push_back({name, std::move(t)});
}

bool Container::has_array(const std::string& name) const {
  for (auto& a : arrays)
    if (a.name == name) return true;
  return false;
}

const Tensor& Container::array(const std::string& name) const {
  for (auto& a : arrays)
    if (a.name == name) return a.data;
  throw io_error("Container: missing array '" + name + "'");
}

void Container::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open '" + path + "' for writing");
  f << magic << "\n";
  for (auto& [k, v] : meta) f << "meta " << k << " " << v << "\n";
  for (auto& a : arrays) {
    f << "array " << a.name << " " << a.data.rank();
    for (int d : a.data.shape()) f << " " << d;
    f << "\n";
  }
  f << "end\n";
  for (auto& a : arrays)
    f.write(reinterpret_cast<const char*>(a.data.data()),
            a.data.numel() * sizeof(double));
  if (!f) throw io_error("write failed for '" + path + "'");
}

Container Container::load(const std::string& path, const std::string& expect_magic) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open '" + path + "'");
  Container c;
  std::string line;
  if (!std::getline(f, line)) throw io_error("'" + path + "': empty file");
  c.magic = line;
  if (c.magic != expect_magic)
    throw io_error("'" + path + "': format '" + c.magic + "', expected '" +
                   expect_magic + "'");
  bool ended = false;
  while (std::getline(f, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "meta") {
      std::string key;
      ss >> key;
      std::string value;
      std::getline(ss, value);
      if (!value.empty() && value[0] == ' ') value.erase(0, 1);
      c.set_meta(key, value);
    } else if (tag == "array") {
      std::string name;
      int rank;
      if (!(ss >> name >> rank) || rank < 0 || rank > 8)
        throw io_error("'" + path + "': bad array declaration: " + line);
      std::vector<int> shape(rank);
      for (int i = 0; i < rank; ++i)
        if (!(ss >> shape[i]))
          throw io_error("'" + path + "': bad array declaration: " + line);
      c.add_array(name, Tensor(shape));
    } else {
      throw io_error("'" + path + "': unrecognized header line: " + line);
    }
  }
  if (!ended) throw io_error("'" + path + "': header not terminated by 'end'");
  for (auto& a : c.arrays) {
    f.read(reinterpret_cast<char*>(a.data.data()),
           a.data.numel() * sizeof(double));
    if (f.gcount() != (std::streamsize)(a.data.numel() * sizeof(double)))
      throw io_error("'" + path + "': truncated payload for array '" + a.name + "'");
  }
  // trailing garbage would break byte-identical round trips; reject it
  char extra;
  if (f.read(&extra, 1) && f.gcount() == 1)
    throw io_error("'" + path + "': trailing bytes after declared arrays");
  return c;
}

}  // namespace ncdeon
