#pragma once

#include "ltssl/model.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ltssl {

/// Loss value with its gradient w.r.t. the logits it was computed from.
struct LogitLoss {
  double value = 0.0;
  RowMatrix dlogits;
};

/// Row-wise softmax of logits / T.
RowMatrix softmax_rows(const RowMatrix& logits, double temperature = 1.0);

/// Mean cross-entropy of softmax(logits) against integer labels.
/// Throws DataError on an empty batch or a label outside [0,K).
LogitLoss ce_supervised(const RowMatrix& logits, std::span<const int> labels);

/// Exponential moving average of the model's mean class prediction on
/// unlabeled data. Starts uniform; stays strictly positive and sums to one.
class ClassPriorEMA {
 public:
  ClassPriorEMA() = default;
  ClassPriorEMA(int num_classes, double decay);

  const std::vector<double>& probabilities() const { return p_; }
  double decay() const { return decay_; }
  int num_classes() const { return static_cast<int>(p_.size()); }

  /// p <- decay * p + (1 - decay) * mean_row(probs), renormalized.
  /// An empty batch leaves p unchanged.
  void update(const RowMatrix& probs);
  /// Overwrites the state (checkpoint restore). Renormalizes.
  void assign(std::span<const double> p);

 private:
  std::vector<double> p_;
  double decay_ = 0.99;
};

/// Per-class additive margins m_j = scale * ln(1 / p_j).
struct MarginVector {
  std::vector<double> m;
  double scale = 0.0;
};

MarginVector margins(const ClassPriorEMA& prior, double lambda_margin);

/// Adaptive margin loss for one row: cross-entropy of softmax(f - m) at
/// `target`. If `grad` is non-empty it receives d loss / d f.
double aml(std::span<const double> logits, int target, const MarginVector& m,
           std::span<double> grad = {});

/// (1/N) * sum_i mask_i * aml(logits_i, pseudo_i, m) with N = logits.rows().
LogitLoss unsup_loss(const RowMatrix& strong_logits, std::span<const int> pseudo,
                     std::span<const std::uint8_t> mask, const MarginVector& m);

struct LossBreakdown {
  double supervised = 0.0;
  double unsupervised = 0.0;
  double triplet = 0.0;
  double total = 0.0;
  double lambda_u = 1.0;
  double lambda_ahtl = 1.5;
};

/// total = L_s + lambda_u * L_u + lambda_ahtl * L_ahtl. Throws NumericFault
/// naming the first non-finite term.
LossBreakdown total_loss(double supervised, double unsupervised, double triplet, double lambda_u,
                         double lambda_ahtl);

}  // namespace ltssl
