#include "aenp/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace aenp {

namespace {

constexpr char kMagic[8] = {'A', 'E', 'N', 'P', 'C', 'K', 'P', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

template <typename T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T take(std::ifstream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof value);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ParamStore& params,
                     const nlohmann::json& manifest) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "params.bin", std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + (dir / "params.bin").string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint64_t>(out, params.size());
    for (const auto& [name, t] : params.items()) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim()));
      for (auto d : t.shape()) put<std::uint64_t>(out, d);
      out.write(reinterpret_cast<const char*>(t.data().data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
  }
  std::ofstream(dir / "manifest.json", std::ios::trunc) << manifest.dump(2) << "\n";
}

nlohmann::json load_checkpoint(const std::filesystem::path& dir, ParamStore& params) {
  std::ifstream in(dir / "params.bin", std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + (dir / "params.bin").string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + (dir / "params.bin").string());
  }
  const auto count = take<std::uint64_t>(in);
  if (count != params.size()) {
    throw std::runtime_error("checkpoint: expected " + std::to_string(params.size()) +
                             " tensors, file has " + std::to_string(count));
  }
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto len = take<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rank = take<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = take<std::uint64_t>(in);
    Tensor t = params.get(name);
    if (t.shape() != shape) {
      throw std::runtime_error("checkpoint: shape mismatch for " + name + ": " +
                               shape_str(shape) + " vs " + shape_str(t.shape()));
    }
    auto data = t.mutable_data();
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated data for " + name);
  }
  std::ifstream mf(dir / "manifest.json");
  if (!mf) return nlohmann::json::object();
  return nlohmann::json::parse(mf);
}

}  // namespace aenp
