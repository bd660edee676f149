#pragma once

#include <filesystem>
#include <string>

#include "aenp/nn.hpp"
#include "json.hpp"

namespace aenp {

/// Writes <dir>/params.bin (name, shape, little-endian float64 triples) and
/// <dir>/manifest.json.
void save_checkpoint(const std::filesystem::path& dir, const ParamStore& params,
                     const nlohmann::json& manifest);

/// Loads values into an existing store; every name and shape must match.
/// Returns the manifest.
nlohmann::json load_checkpoint(const std::filesystem::path& dir, ParamStore& params);

}  // namespace aenp
