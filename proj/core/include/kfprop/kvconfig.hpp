#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace kfprop {

// Plain key=value text, '#' starts a comment, blank lines ignored.
class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig parse(const std::string& text);
  static KvConfig load(const std::string& path);
  void save(const std::string& path) const;
  std::string to_text() const;

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set_u64(const std::string& key, std::uint64_t v) { values_[key] = std::to_string(v); }
  void set_f64(const std::string& key, double v);

  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::uint64_t get_u64_or(const std::string& key, std::uint64_t fallback) const;
  double get_f64(const std::string& key) const;
  double get_f64_or(const std::string& key, double fallback) const;

  const std::map<std::string, std::string>& items() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace kfprop
