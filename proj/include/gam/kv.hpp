// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gam::kv {

// One logical line of a key=value config file. `line` is 1-based and survives
// into error messages so a bad entry can be found by eye.
struct KVLine {
  std::string key, value;
  int line = 0;
};

// Parses a key=value file. '#' starts a comment, blank lines are skipped,
// whitespace around keys and values is trimmed. Malformed lines raise
// config_error with the file name and line number.
std::vector<KVLine> parse_file(const std::string& path);

// Typed readers. Each validates the full token and the [lo, hi] range and
// raises config_error citing path:line on any problem.
int64_t parse_int(const std::string& path, const KVLine& kv, int64_t lo, int64_t hi);
uint64_t parse_u64(const std::string& path, const KVLine& kv);  // full 64-bit range
double parse_real(const std::string& path, const KVLine& kv, double lo, double hi);
bool parse_bool(const std::string& path, const KVLine& kv);  // 0/1/true/false

}  // namespace gam::kv
