// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "mudaif/errors.hpp"

namespace mudaif::json_read {

// Small helpers for strict config decoding. Every failure is a ConfigError
// whose message starts with the JSON path of the offending value.

inline void require_object(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
}

inline void reject_unknown(const nlohmann::json& j, const std::string& path,
                           const std::set<std::string>& known) {
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError(path + "." + key + ": unknown key");
  }
}

inline std::size_t get_count(const nlohmann::json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() < 0) {
    throw ConfigError(path + ": expected a non-negative integer");
  }
  return j.get<std::size_t>();
}

inline double get_number(const nlohmann::json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path + ": expected a number");
  return j.get<double>();
}

inline bool get_bool(const nlohmann::json& j, const std::string& path) {
  if (!j.is_boolean()) throw ConfigError(path + ": expected a boolean");
  return j.get<bool>();
}

inline std::string get_string(const nlohmann::json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path + ": expected a string");
  return j.get<std::string>();
}

}  // namespace mudaif::json_read
