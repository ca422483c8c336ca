// SPDX-License-Identifier: Apache-2.0
#include "gam/kv.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>

#include "gam/error.hpp"

namespace gam::kv {

namespace {

std::string where(const std::string& path, const KVLine& kv) {
  return path + ":" + std::to_string(kv.line) + ": " + kv.key + "=" + kv.value;
}

}  // namespace

std::vector<KVLine> parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is.good()) throw config_error("cannot open " + path);
  std::vector<KVLine> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string s = line;
    if (auto h = s.find('#'); h != std::string::npos) s = s.substr(0, h);
    const auto notspace = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
    s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
      throw config_error(path + ":" + std::to_string(lineno) +
                         ": expected key=value, got '" + line + "'");
    std::string key = s.substr(0, eq), value = s.substr(eq + 1);
    key.erase(std::find_if(key.rbegin(), key.rend(), notspace).base(), key.end());
    value.erase(value.begin(), std::find_if(value.begin(), value.end(), notspace));
    out.push_back({key, value, lineno});
  }
  return out;
}

int64_t parse_int(const std::string& path, const KVLine& kv, int64_t lo, int64_t hi) {
  try {
    size_t pos = 0;
    const int64_t v = std::stoll(kv.value, &pos);
    if (pos != kv.value.size()) throw std::invalid_argument("trailing");
    if (v < lo || v > hi)
      throw config_error(where(path, kv) + " outside [" + std::to_string(lo) + "," +
                         std::to_string(hi) + "]");
    return v;
  } catch (const config_error&) {
    throw;
  } catch (const std::exception&) {
    throw config_error(where(path, kv) + " is not an integer");
  }
}

uint64_t parse_u64(const std::string& path, const KVLine& kv) {
  try {
    size_t pos = 0;
    check(!kv.value.empty() && kv.value[0] != '-', "negative");
    const uint64_t v = std::stoull(kv.value, &pos);
    if (pos != kv.value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw config_error(where(path, kv) + " is not an unsigned 64-bit integer");
  }
}

double parse_real(const std::string& path, const KVLine& kv, double lo, double hi) {
  try {
    size_t pos = 0;
    const double v = std::stod(kv.value, &pos);
    if (pos != kv.value.size()) throw std::invalid_argument("trailing");
    if (v < lo || v > hi)
      throw config_error(where(path, kv) + " outside [" + std::to_string(lo) + "," +
                         std::to_string(hi) + "]");
    return v;
  } catch (const config_error&) {
    throw;
  } catch (const std::exception&) {
    throw config_error(where(path, kv) + " is not a number");
  }
}

bool parse_bool(const std::string& path, const KVLine& kv) {
  if (kv.value == "0" || kv.value == "false") return false;
  if (kv.value == "1" || kv.value == "true") return true;
  throw config_error(where(path, kv) + " is not a boolean (use 0/1/true/false)");
}

}  // namespace gam::kv
