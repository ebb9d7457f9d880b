#include "chr/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "chr/errors.hpp"

namespace chr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

FlatConfig parse_flat_config(const std::string& text) {
  FlatConfig out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    out[key] = trim(t.substr(eq + 1));
  }
  return out;
}

FlatConfig read_flat_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_flat_config(ss.str());
}

std::string to_text(const FlatConfig& config) {
  std::string out;
  for (const auto& [k, v] : config) out += k + "=" + v + "\n";
  return out;
}

int get_int(const FlatConfig& c, const std::string& key, int fallback) {
  auto it = c.find(key);
  if (it == c.end()) return fallback;
  int v = 0;
  const auto& s = it->second;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("config key " + key + ": not an integer: " + s);
  return v;
}

std::uint64_t get_u64(const FlatConfig& c, const std::string& key, std::uint64_t fallback) {
  auto it = c.find(key);
  if (it == c.end()) return fallback;
  std::uint64_t v = 0;
  const auto& s = it->second;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("config key " + key + ": not an unsigned integer: " + s);
  return v;
}

double get_double(const FlatConfig& c, const std::string& key, double fallback) {
  auto it = c.find(key);
  if (it == c.end()) return fallback;
  double v = 0;
  const auto& s = it->second;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("config key " + key + ": not a number: " + s);
  return v;
}

bool get_bool(const FlatConfig& c, const std::string& key, bool fallback) {
  auto it = c.find(key);
  if (it == c.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("config key " + key + ": expected true/false, got " + it->second);
}

std::string get_string(const FlatConfig& c, const std::string& key, const std::string& fallback) {
  auto it = c.find(key);
  return it == c.end() ? fallback : it->second;
}

std::vector<int> get_int_list(const FlatConfig& c, const std::string& key, const std::vector<int>& fallback) {
  auto it = c.find(key);
  if (it == c.end()) return fallback;
  std::vector<int> out;
  std::stringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ',')) {
    FlatConfig one{{key, trim(item)}};
    out.push_back(get_int(one, key, 0));
  }
  if (out.empty()) throw ConfigError("config key " + key + ": empty list");
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace chr
