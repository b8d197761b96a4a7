#pragma once

#include "ltssl/dataset.hpp"
#include "ltssl/model.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

namespace ltssl {

/// Free energy of a logit vector: E = -T * log(sum_i exp(f_i / T)).
/// Lower energy means closer to the training distribution.
double energy(std::span<const double> logits, double temperature);

/// Numerically stable log(sum_i exp(x_i)).
double logsumexp(std::span<const double> x);

enum class GateMode { kEnergy, kConfidence };

struct SelectionConfig {
  double tau_e = -9.5;
  double temperature = 1.0;
  GateMode mode = GateMode::kEnergy;
  double tau_c = 0.95;  // used only in confidence mode

  void validate() const;
};

struct PseudoLabelRecord {
  std::uint32_t id = 0;
  int predicted = 0;
  double energy = 0.0;
  std::int64_t iteration = 0;
};

/// Per-row outcome of the gate. `mask[i]` is 1 iff row i was selected.
struct Selection {
  std::vector<std::uint8_t> mask;
  std::vector<int> predicted;  // argmax for every row, selected or not
  std::vector<double> energy;  // energy for every row
  std::vector<double> confidence;  // max softmax (T = 1) for every row
  std::vector<PseudoLabelRecord> records;

  std::size_t selected_count() const { return records.size(); }
};

/// Energy mode selects rows with E < tau_e (strict). Confidence mode selects
/// rows whose max softmax exceeds tau_c. Stateless: the result depends only on
/// the logits and the config.
Selection select(const RowMatrix& logits, std::span<const std::uint32_t> ids,
                 const SelectionConfig& cfg, std::int64_t iteration);

struct ClassAudit {
  int cls = 0;
  std::size_t selected = 0;
  std::size_t correct = 0;
  std::size_t unlabeled_total = 0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> mean_energy;
};

struct AuditTable {
  std::vector<ClassAudit> classes;
  std::size_t selected = 0;
  std::size_t correct = 0;
  std::optional<double> precision;  // overall
  std::optional<double> recall;     // overall
};

/// Precision/recall of pseudo-labels per predicted class against hidden
/// ground truth. With no records at all every rate is reported as absent.
/// Throws DataError if a record id has no hidden label.
AuditTable audit(std::span<const PseudoLabelRecord> records, const HiddenLabels& truth,
                 int num_classes);

/// One JSON object per class:
/// {"epoch","class","selected","correct","precision","recall","mean_energy"}.
void write_audit_jsonl(std::ostream& os, std::int64_t epoch, const AuditTable& table);

}  // namespace ltssl
