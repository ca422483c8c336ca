// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace gam {

// All recoverable failures (bad shapes, bad files, bad config) throw gam::error.
// The CLI maps these to exit code 1 (or 2 for usage/config problems).
class error : public std::runtime_error {
 public:
  explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

class config_error : public error {
 public:
  explicit config_error(const std::string& msg) : error(msg) {}
};

template <class... Parts>
[[noreturn]] void fail(const Parts&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  throw error(os.str());
}

template <class... Parts>
void check(bool ok, const Parts&... parts) {
  if (!ok) fail(parts...);
}

}  // namespace gam
