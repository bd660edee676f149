#include "aenp/config_error.hpp"

#include <algorithm>

namespace aenp {

namespace {
std::string join_keys(const std::string& message, const std::vector<std::string>& keys) {
  if (keys.empty()) return message;
  std::string out = message + " [";
  for (std::size_t i = 0; i < keys.size(); ++i) out += (i ? ", " : "") + keys[i];
  return out + "]";
}
}  // namespace

ConfigError::ConfigError(const std::string& message, std::vector<std::string> keys)
    : std::invalid_argument(join_keys(message, keys)), keys_(std::move(keys)) {}

void reject_unknown_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                         const std::string& prefix) {
  if (!j.is_object()) {
    throw ConfigError("expected an object", {prefix.empty() ? "<root>" : prefix});
  }
  std::vector<std::string> bad;
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      bad.push_back(prefix.empty() ? key : prefix + "." + key);
    }
  }
  if (!bad.empty()) throw ConfigError("unknown configuration keys", bad);
}

}  // namespace aenp
