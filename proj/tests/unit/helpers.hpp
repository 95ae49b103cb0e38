#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "almr/error.hpp"

namespace testing {

inline std::string data_path(const std::string& name) {
  return std::string(ALMR_TEST_DATA) + "/" + name;
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Stage of the almr::Error thrown by f, or nullopt-like -1 when none is thrown.
template <class F>
int stage_of(F&& f) {
  try {
    f();
  } catch (const almr::Error& e) {
    return int(e.stage());
  }
  return -1;
}

template <class F>
std::string message_of(F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace testing
