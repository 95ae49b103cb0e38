#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "almr/error.hpp"

namespace almr::detail {

inline void require_object(const nlohmann::json& j, std::string_view what) {
  if (!j.is_object())
    throw Error(Stage::parse, std::string(what) + ": expected an object");
}

inline void reject_unknown(const nlohmann::json& j,
                           std::initializer_list<std::string_view> known,
                           std::string_view prefix) {
  for (const auto& [key, _] : j.items()) {
    bool found = false;
    for (auto k : known) found = found || k == key;
    if (!found)
      throw Error(Stage::parse,
                  std::string(prefix) + key + ": unknown field");
  }
}

inline const nlohmann::json& require_field(const nlohmann::json& j,
                                           std::string_view key,
                                           std::string_view prefix) {
  auto it = j.find(key);
  if (it == j.end())
    throw Error(Stage::parse,
                std::string(prefix) + std::string(key) + ": missing field");
  return *it;
}

inline double get_number(const nlohmann::json& j, std::string_view key,
                         std::string_view prefix) {
  const auto& v = require_field(j, key, prefix);
  if (!v.is_number())
    throw Error(Stage::parse,
                std::string(prefix) + std::string(key) + ": not a number");
  return v.get<double>();
}

// Accepts integers and integral floating values such as 1e11.
inline std::int64_t get_int(const nlohmann::json& j, std::string_view key,
                            std::string_view prefix) {
  const auto& v = require_field(j, key, prefix);
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isfinite(d) && d == std::trunc(d) && std::abs(d) < 9.2e18)
      return static_cast<std::int64_t>(d);
  }
  throw Error(Stage::parse,
              std::string(prefix) + std::string(key) + ": not an integer");
}

inline std::string get_string(const nlohmann::json& j, std::string_view key,
                              std::string_view prefix) {
  const auto& v = require_field(j, key, prefix);
  if (!v.is_string())
    throw Error(Stage::parse,
                std::string(prefix) + std::string(key) + ": not a string");
  return v.get<std::string>();
}

}  // namespace almr::detail
