#include "aenp/config_error.hpp"
#include "aenp/models.hpp"

namespace aenp {

std::string to_string(Family f) {
  switch (f) {
    case Family::convcnp: return "convcnp";
    case Family::equivcnp: return "equivcnp";
    case Family::relaxedconvcnp: return "relaxedconvcnp";
    case Family::tetnp: return "tetnp";
    case Family::pttetnp: return "pttetnp";
    case Family::tnp: return "tnp";
  }
  return "unknown";
}

Family family_from_string(const std::string& s) {
  for (Family f : {Family::convcnp, Family::equivcnp, Family::relaxedconvcnp, Family::tetnp,
                   Family::pttetnp, Family::tnp}) {
    if (to_string(f) == s) return f;
  }
  throw ConfigError("unknown model family '" + s + "'", {"model.family"});
}

bool is_grid_family(Family f) {
  return f == Family::convcnp || f == Family::equivcnp || f == Family::relaxedconvcnp;
}

void ModelConfig::finalize() {
  std::vector<std::string> bad;
  const bool grid = is_grid_family(family);
  if (family == Family::tnp && tilde) bad.push_back("model.tilde");
  if (bank.features.empty()) bank.features = (family == Family::tetnp) ? "fourier" : "raw";
  if (bank.count < 0) {
    if (family == Family::tetnp) bank.count = 4;
    else if (family == Family::relaxedconvcnp) bank.count = conv_layers;
    else bank.count = grid ? channels : dz;
  }
  if (bank.dropout_prob < 0.0) bank.dropout_prob = grid ? 0.1 : 0.5;
  if (bank.features != "raw" && bank.features != "fourier") bad.push_back("model.bank.features");
  if (!(bank.dropout_prob >= 0.0 && bank.dropout_prob <= 1.0)) bad.push_back("model.bank.dropout_prob");
  if (!(bank.support_lo < bank.support_hi)) bad.push_back("model.bank.support");
  if (!(bank.fourier_period > 0.0)) bad.push_back("model.bank.fourier_period");
  if (family == Family::relaxedconvcnp && bank.count != conv_layers) bad.push_back("model.bank.count");
  if (grid) {
    if (channels < 1) bad.push_back("model.channels");
    if (kernel_size < 1 || kernel_size % 2 == 0) bad.push_back("model.kernel_size");
    if (conv_layers < 1) bad.push_back("model.conv_layers");
    if (!(grid_density > 0.0)) bad.push_back("model.grid_density");
    if (!(grid_margin >= 0.0)) bad.push_back("model.grid_margin");
    if (decoder_lengthscales < 1) bad.push_back("model.decoder_lengthscales");
  } else {
    if (dz < 1) bad.push_back("model.dz");
    if (heads < 1) bad.push_back("model.heads");
    if (head_dim < 1) bad.push_back("model.head_dim");
    if (layers < 1) bad.push_back("model.layers");
    if (family != Family::tnp && mu_hidden < 1) bad.push_back("model.mu_hidden");
    if (family == Family::pttetnp && pseudo_tokens < 1) bad.push_back("model.pseudo_tokens");
  }
  if (!bad.empty()) throw ConfigError("invalid model configuration", bad);
}

bool ModelConfig::has_bank() const { return tilde && bank.count > 0; }

void to_json(nlohmann::json& j, const BankConfig& c) {
  j = {{"count", c.count},
       {"features", c.features},
       {"support", {c.support_lo, c.support_hi}},
       {"dropout_prob", c.dropout_prob},
       {"fourier_period", c.fourier_period}};
}

void from_json(const nlohmann::json& j, BankConfig& c) {
  const std::string p = "model.bank";
  reject_unknown_keys(j, {"count", "B", "features", "support", "dropout_prob", "fourier_period"}, p);
  read_optional(j, "count", c.count, p);
  read_optional(j, "B", c.count, p);
  read_optional(j, "features", c.features, p);
  std::pair<double, double> support{c.support_lo, c.support_hi};
  read_optional(j, "support", support, p);
  c.support_lo = support.first;
  c.support_hi = support.second;
  read_optional(j, "dropout_prob", c.dropout_prob, p);
  read_optional(j, "fourier_period", c.fourier_period, p);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"family", to_string(c.family)},
       {"tilde", c.tilde},
       {"seed", c.seed},
       {"bank", c.bank}};
  if (is_grid_family(c.family)) {
    j["channels"] = c.channels;
    j["kernel_size"] = c.kernel_size;
    j["conv_layers"] = c.conv_layers;
    j["grid_density"] = c.grid_density;
    j["grid_margin"] = c.grid_margin;
    j["decoder_lengthscales"] = c.decoder_lengthscales;
  } else {
    j["dz"] = c.dz;
    j["heads"] = c.heads;
    j["head_dim"] = c.head_dim;
    j["layers"] = c.layers;
    if (c.family != Family::tnp) j["mu_hidden"] = c.mu_hidden;
    if (c.family == Family::pttetnp) j["pseudo_tokens"] = c.pseudo_tokens;
  }
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  const std::string p = "model";
  reject_unknown_keys(j,
                      {"family", "tilde", "seed", "channels", "kernel_size", "conv_layers",
                       "grid_density", "grid_margin", "decoder_lengthscales", "dz", "heads",
                       "head_dim", "layers", "mu_hidden", "pseudo_tokens", "bank"},
                      p);
  std::string family = to_string(c.family);
  read_optional(j, "family", family, p);
  c.family = family_from_string(family);
  read_optional(j, "tilde", c.tilde, p);
  read_optional(j, "seed", c.seed, p);
  read_optional(j, "channels", c.channels, p);
  read_optional(j, "kernel_size", c.kernel_size, p);
  read_optional(j, "conv_layers", c.conv_layers, p);
  read_optional(j, "grid_density", c.grid_density, p);
  read_optional(j, "grid_margin", c.grid_margin, p);
  read_optional(j, "decoder_lengthscales", c.decoder_lengthscales, p);
  read_optional(j, "dz", c.dz, p);
  read_optional(j, "heads", c.heads, p);
  read_optional(j, "head_dim", c.head_dim, p);
  read_optional(j, "layers", c.layers, p);
  read_optional(j, "mu_hidden", c.mu_hidden, p);
  read_optional(j, "pseudo_tokens", c.pseudo_tokens, p);
  if (j.contains("bank")) from_json(j.at("bank"), c.bank);
}

}  // namespace aenp
