#include "ltssl/report.hpp"

#include "ltssl/errors.hpp"
#include "ltssl/format.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace ltssl {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : k_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  if (num_classes < 1) throw ConfigError("confusion matrix needs K >= 1");
}

void ConfusionMatrix::add(int truth, int predicted) {
  if (truth < 0 || truth >= k_ || predicted < 0 || predicted >= k_)
    throw DataError("confusion: class outside [0,K)");
  ++counts_[static_cast<std::size_t>(truth) * k_ + predicted];
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw ConfigError("cannot merge confusion matrices of different K");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::count(int truth, int predicted) const {
  return counts_[static_cast<std::size_t>(truth) * k_ + predicted];
}

std::uint64_t ConfusionMatrix::row_total(int truth) const {
  std::uint64_t n = 0;
  for (int p = 0; p < k_; ++p) n += count(truth, p);
  return n;
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t n = 0;
  for (int c = 0; c < k_; ++c) n += count(c, c);
  return n;
}

std::vector<std::vector<double>> ConfusionMatrix::normalized() const {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(k_),
                                       std::vector<double>(static_cast<std::size_t>(k_), 0.0));
  for (int t = 0; t < k_; ++t) {
    const auto row = row_total(t);
    if (row == 0) continue;
    for (int p = 0; p < k_; ++p)
      out[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)] =
          static_cast<double>(count(t, p)) / static_cast<double>(row);
  }
  return out;
}

double ConfusionMatrix::accuracy() const {
  const auto n = total();
  return n == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(n);
}

std::vector<std::optional<double>> ConfusionMatrix::per_class_recall() const {
  std::vector<std::optional<double>> out(static_cast<std::size_t>(k_));
  for (int c = 0; c < k_; ++c) {
    const auto row = row_total(c);
    if (row > 0) out[static_cast<std::size_t>(c)] = static_cast<double>(count(c, c)) / static_cast<double>(row);
  }
  return out;
}

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels,
                          int num_classes) {
  if (predictions.size() != labels.size()) throw DataError("predictions and labels differ in length");
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) cm.add(labels[i], predictions[i]);
  return cm;
}

std::vector<int> smallest_classes(std::span<const std::size_t> counts, int n) {
  std::vector<int> order(counts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const auto ca = counts[static_cast<std::size_t>(a)], cb = counts[static_cast<std::size_t>(b)];
    return ca != cb ? ca < cb : a > b;
  });
  order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(std::max(n, 0))));
  std::sort(order.begin(), order.end());
  return order;
}

std::optional<double> mean_recall(const std::vector<std::optional<double>>& recall,
                                  std::span<const int> classes) {
  double sum = 0.0;
  int n = 0;
  for (int c : classes) {
    const auto& r = recall[static_cast<std::size_t>(c)];
    if (!r) continue;
    sum += *r;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

MetricsReport summarize(const ConfusionMatrix& cm, std::span<const std::size_t> training_counts,
                        std::span<const PseudoLabelPoint> pseudo_labels,
                        const std::string& fingerprint, std::optional<int> tail_count) {
  const int k = cm.num_classes();
  if (static_cast<int>(training_counts.size()) != k)
    throw ConfigError("training class counts do not match the confusion matrix");
  MetricsReport r;
  r.num_classes = k;
  r.confusion = cm;
  r.overall_accuracy = cm.accuracy();
  r.per_class_recall = cm.per_class_recall();
  r.tail_classes = smallest_classes(training_counts, tail_count.value_or((k + 1) / 2));
  for (int c = 0; c < k; ++c)
    if (std::find(r.tail_classes.begin(), r.tail_classes.end(), c) == r.tail_classes.end())
      r.head_classes.push_back(c);
  r.tail_recall = mean_recall(r.per_class_recall, r.tail_classes);
  r.head_recall = mean_recall(r.per_class_recall, r.head_classes);
  r.pseudo_labels.assign(pseudo_labels.begin(), pseudo_labels.end());
  r.config_fingerprint = fingerprint;
  return r;
}

namespace {

nlohmann::ordered_json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

nlohmann::ordered_json MetricsReport::to_json() const {
  using nlohmann::ordered_json;
  ordered_json j;
  j["config_fingerprint"] = config_fingerprint;
  j["num_classes"] = num_classes;
  j["overall_accuracy"] = overall_accuracy;
  ordered_json recall = ordered_json::array();
  for (const auto& v : per_class_recall) recall.push_back(optional_number(v));
  j["per_class_recall"] = recall;
  j["head_classes"] = head_classes;
  j["tail_classes"] = tail_classes;
  j["head_recall"] = optional_number(head_recall);
  j["tail_recall"] = optional_number(tail_recall);
  ordered_json counts = ordered_json::array();
  for (int t = 0; t < num_classes; ++t) {
    std::vector<std::uint64_t> row;
    for (int p = 0; p < num_classes; ++p) row.push_back(confusion.count(t, p));
    counts.push_back(row);
  }
  j["confusion"] = counts;
  ordered_json traj = ordered_json::array();
  for (const auto& p : pseudo_labels) {
    ordered_json e;
    e["step"] = p.step;
    e["selected"] = p.selected;
    e["precision"] = optional_number(p.precision);
    e["recall"] = optional_number(p.recall);
    traj.push_back(e);
  }
  j["pseudo_labels"] = traj;
  return j;
}

std::string MetricsReport::to_text() const {
  std::ostringstream os;
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("     -");
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << std::setw(6) << 100.0 * *v;
    return s.str();
  };
  os << "config " << config_fingerprint << "\n";
  os << "overall accuracy " << pct(overall_accuracy) << " %\n";
  os << "head recall      " << pct(head_recall) << " %\n";
  os << "tail recall      " << pct(tail_recall) << " %\n\n";
  os << "class  role  recall  |";
  for (int p = 0; p < num_classes; ++p) os << std::setw(6) << p;
  os << "\n";
  for (int c = 0; c < num_classes; ++c) {
    const bool tail = std::find(tail_classes.begin(), tail_classes.end(), c) != tail_classes.end();
    os << std::setw(5) << c << "  " << (tail ? "tail" : "head") << "  "
       << pct(per_class_recall[static_cast<std::size_t>(c)]) << "  |";
    for (int p = 0; p < num_classes; ++p) os << std::setw(6) << confusion.count(c, p);
    os << "\n";
  }
  if (!pseudo_labels.empty()) {
    os << "\n  step  selected  precision  recall\n";
    for (const auto& p : pseudo_labels)
      os << std::setw(6) << p.step << std::setw(10) << p.selected << "     " << pct(p.precision)
         << "  " << pct(p.recall) << "\n";
  }
  return os.str();
}

}  // namespace ltssl
