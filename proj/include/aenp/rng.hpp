#pragma once

#include <cstdint>
#include <string>

namespace aenp {

/// Independent random streams. Each (seed, stream, index) triple names one
/// stream, so tasks and batches can be generated in any order.
enum class Stream : std::uint64_t {
  init = 1,
  train = 2,
  dropout = 3,
  validation = 4,
  eval_id = 5,
  eval_ood = 6,
  eval_context = 7,
  plot = 8,
  lab = 9,
};

std::uint64_t mix64(std::uint64_t z);

class Rng {
 public:
  explicit Rng(std::uint64_t seed, Stream stream = Stream::init, std::uint64_t index = 0);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Integer uniform on the closed range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t value);

}  // namespace aenp
