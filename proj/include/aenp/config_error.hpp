#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace aenp {

/// Invalid configuration. Carries the dotted paths of the offending keys.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& message, std::vector<std::string> keys = {});
  const std::vector<std::string>& keys() const { return keys_; }

 private:
  std::vector<std::string> keys_;
};

/// Throws ConfigError naming every key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                         const std::string& prefix);

/// Reads j[key] into out when present, reporting type errors as ConfigError.
template <typename T>
void read_optional(const nlohmann::json& j, const char* key, T& out, const std::string& prefix) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    throw ConfigError("bad value for " + path + ": " + e.what(), {path});
  }
}

}  // namespace aenp
