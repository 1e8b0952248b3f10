#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ncdeon/tensor.hpp"

namespace ncdeon {

// Shared on-disk container for datasets and checkpoints: a small UTF-8
// header (magic line, `meta key value` lines, `array name rank dims...`
// declarations, `end`), followed by the raw little-endian f64 payload of
// each array in declaration order.  No timestamps, no floating text — the
// same content always serializes to the same bytes.
struct Container {
  std::string magic;
  std::vector<std::pair<std::string, std::string>> meta;
  struct Arr {
    std::string name;
    Tensor data;
  };
  std::vector<Arr> arrays;

  void set_meta(const std::string& key, const std::string& value);
  bool has_meta(const std::string& key) const;
  const std::string& get_meta(const std::string& key) const;
  double meta_num(const std::string& key) const;
  long long meta_int(const std::string& key) const;

  void add_array(const std::string& name, Tensor t);
  bool has_array(const std::string& name) const;
  const Tensor& array(const std::string& name) const;

  void save(const std::string& path) const;
  static Container load(const std::string& path, const std::string& expect_magic);
};

}  // namespace ncdeon
