#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace dnmt::util {

// Line-oriented `key = value` text. '#' starts a comment, blank lines are
// ignored, keys are flat strings that may contain dots.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text, const std::string& origin = "config");
  static KeyValues load(const std::string& path);
  std::string format() const;

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void merge(const KeyValues& other);

  // Typed accessors throw ContractError naming the key on malformed values.
  std::string get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace dnmt::util
