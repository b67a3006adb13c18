#pragma once

#include "pct/errors.hpp"

#include <map>
#include <string>
#include <vector>

namespace pct::kv {

std::string trim(const std::string& s);

/// Parses `key = value` lines. Blank lines and lines starting with # are
/// skipped. Later duplicates overwrite earlier ones.
std::map<std::string, std::string> parse(const std::string& text);

long long to_int(const std::string& key, const std::string& value);
double to_real(const std::string& key, const std::string& value);
bool to_bool(const std::string& key, const std::string& value);
std::vector<int> to_int_list(const std::string& key, const std::string& value);
std::string int_list_to_string(const std::vector<int>& v);

} // namespace pct::kv
