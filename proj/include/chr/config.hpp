#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace chr {

/// Flat key=value configuration. Lines starting with '#' are comments.
using FlatConfig = std::map<std::string, std::string>;

FlatConfig parse_flat_config(const std::string& text);
FlatConfig read_flat_config(const std::filesystem::path& path);
/// Canonical text form: sorted "key=value" lines.
std::string to_text(const FlatConfig& config);

/// Typed accessors; throw ConfigError naming the key on bad values.
int get_int(const FlatConfig& c, const std::string& key, int fallback);
double get_double(const FlatConfig& c, const std::string& key, double fallback);
std::uint64_t get_u64(const FlatConfig& c, const std::string& key, std::uint64_t fallback);
bool get_bool(const FlatConfig& c, const std::string& key, bool fallback);
std::string get_string(const FlatConfig& c, const std::string& key, const std::string& fallback);
std::vector<int> get_int_list(const FlatConfig& c, const std::string& key, const std::vector<int>& fallback);

std::string join_ints(const std::vector<int>& v);
/// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace chr
