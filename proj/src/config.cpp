#include "wavetomo/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace wavetomo {
namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config " + path + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str(), path);
}

Config Config::parse_string(const std::string& text, const std::string& origin) {
  Config cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw std::runtime_error("config " + origin + ":" + std::to_string(lineno) +
                                 ": malformed section header '" + line + "'");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config " + origin + ":" + std::to_string(lineno) +
                               ": expected key=value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::runtime_error("config " + origin + ":" + std::to_string(lineno) + ": empty key");
    }
    cfg.values_[section.empty() ? key : section + "." + key] = value;
  }
  return cfg;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t used = 0;
    double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("config key " + key + ": '" + it->second + "' is not a number");
  }
}

int Config::get_int(const std::string& key, int fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t used = 0;
    long v = std::stol(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("");
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw std::runtime_error("config key " + key + ": '" + it->second + "' is not an integer");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(), ::tolower);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::runtime_error("config key " + key + ": '" + it->second + "' is not a boolean");
}

std::string Config::require(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::runtime_error("config: missing required key " + key);
  return it->second;
}

void Config::overlay(const Config& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::string Config::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace wavetomo
