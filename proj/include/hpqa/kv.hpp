#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace hpqa {

// Flat key=value text: one pair per line, '#' starts a comment, blank lines
// ignored. Used for run configs and stream specs.
std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

bool parse_bool(const std::string& key, const std::string& value);
std::int64_t parse_int(const std::string& key, const std::string& value);
double parse_double(const std::string& key, const std::string& value);

// Shortest decimal form that round-trips the double exactly.
std::string format_double(double v);

}  // namespace hpqa
