#include "ltssl/energy.hpp"

#include "ltssl/errors.hpp"
#include "ltssl/format.hpp"

#include <algorithm>
#include <cmath>

namespace ltssl {

double logsumexp(std::span<const double> x) {
  if (x.empty()) throw ConfigError("logsumexp of an empty vector");
  const double hi = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - hi);
  return hi + std::log(sum);
}

double energy(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("energy temperature must be > 0");
  if (logits.empty()) throw ConfigError("energy of an empty logit vector");
  double hi = -INFINITY;
  for (double f : logits) {
    if (!std::isfinite(f)) throw NumericFault("energy", "non-finite logit");
    hi = std::max(hi, f);
  }
  double sum = 0.0;
  for (double f : logits) sum += std::exp((f - hi) / temperature);
  return -hi - temperature * std::log(sum);
}

void SelectionConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw ConfigError("temperature T must be > 0");
  if (!std::isfinite(tau_e)) throw ConfigError("tau_e must be finite");
  if (mode == GateMode::kConfidence && !(tau_c > 0.0 && tau_c < 1.0))
    throw ConfigError("tau_c must lie in (0,1)");
}

Selection select(const RowMatrix& logits, std::span<const std::uint32_t> ids,
                 const SelectionConfig& cfg, std::int64_t iteration) {
  cfg.validate();
  if (static_cast<std::size_t>(logits.rows()) != ids.size())
    throw ConfigError("selection needs one id per logit row");
  const auto n = static_cast<std::size_t>(logits.rows());
  const auto k = static_cast<std::size_t>(logits.cols());
  Selection sel;
  sel.mask.assign(n, 0);
  sel.predicted.resize(n);
  sel.energy.resize(n);
  sel.confidence.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::span<const double> row(logits.row(static_cast<Eigen::Index>(i)).data(), k);
    const auto best = std::max_element(row.begin(), row.end());
    sel.predicted[i] = static_cast<int>(best - row.begin());
    sel.energy[i] = energy(row, cfg.temperature);
    // max softmax = exp(max - logsumexp)
    sel.confidence[i] = std::exp(*best - logsumexp(row));
    const bool keep = cfg.mode == GateMode::kEnergy ? sel.energy[i] < cfg.tau_e
                                                    : sel.confidence[i] > cfg.tau_c;
    if (keep) {
      sel.mask[i] = 1;
      sel.records.push_back({ids[i], sel.predicted[i], sel.energy[i], iteration});
    }
  }
  return sel;
}

AuditTable audit(std::span<const PseudoLabelRecord> records, const HiddenLabels& truth,
                 int num_classes) {
  if (num_classes < 1) throw ConfigError("audit needs at least one class");
  AuditTable table;
  const auto totals = truth.class_counts(num_classes);
  std::vector<double> energy_sum(static_cast<std::size_t>(num_classes), 0.0);
  table.classes.resize(static_cast<std::size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    table.classes[static_cast<std::size_t>(c)].cls = c;
    table.classes[static_cast<std::size_t>(c)].unlabeled_total = totals[static_cast<std::size_t>(c)];
  }

  for (const auto& r : records) {
    const auto label = truth.lookup(r.id);
    if (!label) throw DataError("audit: pseudo-label id " + std::to_string(r.id) + " has no hidden label");
    if (r.predicted < 0 || r.predicted >= num_classes)
      throw DataError("audit: predicted class outside [0,K)");
    auto& row = table.classes[static_cast<std::size_t>(r.predicted)];
    ++row.selected;
    energy_sum[static_cast<std::size_t>(r.predicted)] += r.energy;
    if (*label == r.predicted) ++row.correct;
  }

  if (records.empty()) return table;

  std::size_t unlabeled_all = 0;
  for (auto& row : table.classes) {
    table.selected += row.selected;
    table.correct += row.correct;
    unlabeled_all += row.unlabeled_total;
    if (row.selected > 0) {
      row.precision = static_cast<double>(row.correct) / static_cast<double>(row.selected);
      row.mean_energy = energy_sum[static_cast<std::size_t>(row.cls)] / static_cast<double>(row.selected);
    }
    if (row.unlabeled_total > 0)
      row.recall = static_cast<double>(row.correct) / static_cast<double>(row.unlabeled_total);
  }
  table.precision = static_cast<double>(table.correct) / static_cast<double>(table.selected);
  if (unlabeled_all > 0)
    table.recall = static_cast<double>(table.correct) / static_cast<double>(unlabeled_all);
  return table;
}

void write_audit_jsonl(std::ostream& os, std::int64_t epoch, const AuditTable& table) {
  for (const auto& row : table.classes) {
    os << "{\"epoch\":" << epoch << ",\"class\":" << row.cls << ",\"selected\":" << row.selected
       << ",\"correct\":" << row.correct << ",\"precision\":" << json_number(row.precision)
       << ",\"recall\":" << json_number(row.recall)
       << ",\"mean_energy\":" << json_number(row.mean_energy) << "}\n";
  }
}

}  // namespace ltssl
