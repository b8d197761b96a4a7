#include "ltssl/gradcheck.hpp"

#include "ltssl/errors.hpp"

#include <algorithm>
#include <cmath>

namespace ltssl {

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& g : groups) m = std::max(m, g.max_rel_error);
  return m;
}

std::size_t GradCheckReport::checked() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.checked;
  return n;
}

namespace {

void score(GroupError& out, double analytic, double numeric, double min_abs) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale <= min_abs) {
    ++out.skipped_small;
    return;
  }
  ++out.checked;
  out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic - numeric) / scale);
}

}  // namespace

GradCheckReport grad_check(const LossEvaluator& loss, const ModelParams& params, double tolerance,
                           const GradCheckOptions& options) {
  const ModelParams analytic = loss.gradient(params);
  if (!analytic.same_layout(params)) throw ConfigError("gradient layout does not match params");
  const std::uint64_t base_region = loss.region ? loss.region(params) : 0;

  GradCheckReport report;
  report.tolerance = tolerance;
  ModelParams probe = params;
  for (std::size_t g = 0; g < params.group_count(); ++g) {
    GroupError err;
    err.name = params.group(g).name();
    auto values = probe.group(g).values();
    const auto grads = analytic.group(g).values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double up = loss.value(probe);
      const bool up_same = !loss.region || loss.region(probe) == base_region;
      values[i] = saved - options.step;
      const double down = loss.value(probe);
      const bool down_same = !loss.region || loss.region(probe) == base_region;
      values[i] = saved;
      if (!up_same || !down_same) {
        ++err.skipped_kink;
        continue;
      }
      score(err, grads[i], (up - down) / (2.0 * options.step), options.min_abs_grad);
    }
    report.groups.push_back(err);
  }
  return report;
}

GroupError grad_check_vector(const std::function<double(std::span<const double>)>& value,
                             std::span<const double> point, std::span<const double> analytic,
                             const GradCheckOptions& options,
                             const std::function<std::uint64_t(std::span<const double>)>& region) {
  if (point.size() != analytic.size()) throw ConfigError("gradient length does not match point");
  std::vector<double> probe(point.begin(), point.end());
  const std::uint64_t base_region = region ? region(probe) : 0;
  GroupError err;
  err.name = "vector";
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + options.step;
    const double up = value(probe);
    const bool up_same = !region || region(probe) == base_region;
    probe[i] = saved - options.step;
    const double down = value(probe);
    const bool down_same = !region || region(probe) == base_region;
    probe[i] = saved;
    if (!up_same || !down_same) {
      ++err.skipped_kink;
      continue;
    }
    score(err, analytic[i], (up - down) / (2.0 * options.step), options.min_abs_grad);
  }
  return err;
}

}  // namespace ltssl
