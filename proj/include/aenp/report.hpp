#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "aenp/models.hpp"
#include "aenp/taskgen.hpp"
#include "aenp/training.hpp"

namespace aenp {

/// Provenance stamped into every emitted file.
struct Provenance {
  std::string config_hash;
  std::string git;
  std::uint64_t seed = 0;
};

struct ResultRow {
  std::string model;
  std::string mode;
  double loglik = 0.0;
  double std_error = 0.0;
  std::size_t n_tasks = 0;
};

struct ResultsTable {
  static constexpr int kSchemaVersion = 1;
  std::vector<ResultRow> rows;

  void add(const std::string& model, const EvalReport& report);
  std::string to_csv(const Provenance& prov) const;
};

std::string loss_curve_csv(const std::vector<EpochRecord>& curve, const Provenance& prov);

/// Writes text to path via a temporary file and rename.
void write_file(const std::filesystem::path& path, const std::string& text);

/// Shortest round-trip decimal for a double, '.' separator.
std::string format_double(double v);

/// SVG of the predictive mean with a ±2σ band (blue) and the bank-off strict
/// path (red), context points, and dotted target-range markers.
std::string plot_task_svg(const Model& model, const Task& task, double target_margin,
                          const Provenance& prov);

}  // namespace aenp
