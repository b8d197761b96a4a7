#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ltssl {

/// K x K counts; rows are true classes, columns predictions.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int num_classes);

  int num_classes() const { return k_; }
  /// Throws DataError if either class is outside [0,K).
  void add(int truth, int predicted);
  /// Associative and commutative; throws ConfigError if K differs.
  void merge(const ConfusionMatrix& other);

  std::uint64_t count(int truth, int predicted) const;
  std::uint64_t row_total(int truth) const;
  std::uint64_t total() const;
  std::uint64_t trace() const;

  /// Row-stochastic view; rows with no samples are all zero.
  std::vector<std::vector<double>> normalized() const;
  /// trace / total, or 0 when empty.
  double accuracy() const;
  /// Recall per true class; absent for classes with no samples.
  std::vector<std::optional<double>> per_class_recall() const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int k_ = 0;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels,
                          int num_classes);

/// Indices of the `n` smallest classes by `counts`; among equal counts the
/// higher class index counts as smaller. Returned in ascending class order.
std::vector<int> smallest_classes(std::span<const std::size_t> counts, int n);

struct PseudoLabelPoint {
  std::int64_t step = 0;
  std::size_t selected = 0;
  std::optional<double> precision;
  std::optional<double> recall;
};

struct MetricsReport {
  int num_classes = 0;
  double overall_accuracy = 0.0;
  std::vector<std::optional<double>> per_class_recall;
  std::vector<int> tail_classes;
  std::vector<int> head_classes;
  std::optional<double> tail_recall;  // mean recall over tail_classes
  std::optional<double> head_recall;
  std::vector<PseudoLabelPoint> pseudo_labels;
  std::string config_fingerprint;
  ConfusionMatrix confusion;

  /// Schema: docs/report.schema.json.
  nlohmann::ordered_json to_json() const;
  /// Aligned plain-text table.
  std::string to_text() const;
};

/// Overall and per-class rates. Tail classes are the `tail_count` smallest
/// training classes, ceil(K/2) by default; the remaining classes are head.
MetricsReport summarize(const ConfusionMatrix& cm, std::span<const std::size_t> training_counts,
                        std::span<const PseudoLabelPoint> pseudo_labels,
                        const std::string& fingerprint, std::optional<int> tail_count = {});

/// Mean of the present recalls over `classes`; absent if none is present.
std::optional<double> mean_recall(const std::vector<std::optional<double>>& recall,
                                  std::span<const int> classes);

}  // namespace ltssl
