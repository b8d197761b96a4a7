#pragma once

#include "ltssl/config.hpp"
#include "ltssl/dataset.hpp"
#include "ltssl/report.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace ltssl {

struct GridAxis {
  std::string key;  // a TrainConfig key
  std::vector<nlohmann::json> values;
};

/// Cartesian product of its axes, first axis varying slowest.
struct SweepGrid {
  std::vector<GridAxis> axes;

  std::size_t size() const;
  /// The i-th point as (key, value) pairs in axis order.
  std::vector<std::pair<std::string, nlohmann::json>> point(std::size_t i) const;
};

/// Named default grids: "tau_e", "temperature", "triplet_margin", "lambda_u",
/// "lambda_ahtl". Throws ConfigError for other names.
GridAxis default_axis(const std::string& name);

/// Seed for one grid point: depends on the base seed and the point's
/// parameter values, never on its position in the grid.
std::uint64_t derived_seed(std::uint64_t base_seed,
                           const std::vector<std::pair<std::string, nlohmann::json>>& point);

struct SweepRow {
  std::vector<std::pair<std::string, nlohmann::json>> point;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::optional<MetricsReport> report;
};

/// Trains one configuration; the default runner calls fit() in memory.
using SweepRunner = std::function<MetricsReport(const TrainConfig&, const DatasetSplit&)>;

/// Runs every point sequentially. A point that throws is recorded as a
/// failed row and the sweep continues.
std::vector<SweepRow> sweep(const TrainConfig& base, const SweepGrid& grid,
                            const DatasetSplit& split, const SweepRunner& runner = {},
                            std::ostream* progress = nullptr);

/// Columns: one per axis, then seed, status, error, overall_accuracy,
/// head_recall, tail_recall, final pseudo-label selected/precision/recall.
void write_sweep_csv(std::ostream& os, const SweepGrid& grid, const std::vector<SweepRow>& rows);

}  // namespace ltssl
