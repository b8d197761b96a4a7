#pragma once

#include "ltssl/model.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ltssl {

struct GradCheckOptions {
  double step = 1e-3;          // central-difference step h
  double min_abs_grad = 1e-6;  // coordinates with max(|analytic|,|numeric|) below this are skipped
};

struct GroupError {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_small = 0;
  std::size_t skipped_kink = 0;
};

struct GradCheckReport {
  std::vector<GroupError> groups;
  double tolerance = 0.0;

  double max_rel_error() const;
  std::size_t checked() const;
  bool passed() const { return max_rel_error() <= tolerance; }
};

/// A scalar loss of the parameters together with its analytic gradient.
/// `region`, if set, returns a signature of the piecewise-smooth region the
/// point lies in (ReLU patterns, active hinges); coordinates whose +-h probes
/// leave the region are skipped as kinks.
struct LossEvaluator {
  std::function<double(const ModelParams&)> value;
  std::function<ModelParams(const ModelParams&)> gradient;
  std::function<std::uint64_t(const ModelParams&)> region;
};

/// Compares analytic gradients against central differences coordinate by
/// coordinate; reports the max relative error |a-n| / max(|a|,|n|) per group.
GradCheckReport grad_check(const LossEvaluator& loss, const ModelParams& params, double tolerance,
                           const GradCheckOptions& options = {});

/// Same check on a flat vector argument.
GroupError grad_check_vector(const std::function<double(std::span<const double>)>& value,
                             std::span<const double> point, std::span<const double> analytic,
                             const GradCheckOptions& options = {},
                             const std::function<std::uint64_t(std::span<const double>)>& region = {});

}  // namespace ltssl
