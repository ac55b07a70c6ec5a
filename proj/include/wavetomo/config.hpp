#ifndef WAVETOMO_CONFIG_HPP
#define WAVETOMO_CONFIG_HPP

#include <map>
#include <string>

namespace wavetomo {

// Flat key=value configuration with optional [section] grouping and '#'
// comments. A key inside [solver] is addressed as "solver.key". Later
// assignments win. Lookups with a default never throw; require() does.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string require(const std::string& key) const;

  // Merge other on top of this one (other wins).
  void overlay(const Config& other);

  // Canonical text form, one fully dotted key per line, sorted. parse(dump())
  // is the identity on the value map.
  std::string dump() const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace wavetomo

#endif
