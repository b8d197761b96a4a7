#include "ltssl/losses.hpp"

#include "ltssl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ltssl {

namespace {

// Returns log-sum-exp of `row` and writes softmax(row) into `prob`.
double lse_and_softmax(std::span<const double> row, std::span<double> prob) {
  const double hi = *std::max_element(row.begin(), row.end());
  double rest = 0.0;
  bool seen_max = false;
  for (std::size_t i = 0; i < row.size(); ++i) {
    const double e = std::exp(row[i] - hi);
    prob[i] = e;
    if (!seen_max && row[i] == hi) {
      seen_max = true;
      continue;
    }
    rest += e;
  }
  const double norm = 1.0 + rest;
  for (double& p : prob) p /= norm;
  return hi + std::log1p(rest);
}

std::span<const double> row_span(const RowMatrix& m, Eigen::Index r) {
  return {m.row(r).data(), static_cast<std::size_t>(m.cols())};
}

}  // namespace

RowMatrix softmax_rows(const RowMatrix& logits, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("softmax temperature must be > 0");
  RowMatrix out(logits.rows(), logits.cols());
  std::vector<double> scaled(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    for (Eigen::Index c = 0; c < logits.cols(); ++c)
      scaled[static_cast<std::size_t>(c)] = logits(r, c) / temperature;
    lse_and_softmax(scaled, {out.row(r).data(), scaled.size()});
  }
  return out;
}

LogitLoss ce_supervised(const RowMatrix& logits, std::span<const int> labels) {
  if (logits.rows() == 0) throw DataError("supervised batch is empty");
  if (static_cast<std::size_t>(logits.rows()) != labels.size())
    throw DataError("one label per logit row required");
  const auto n = static_cast<double>(logits.rows());
  const int k = static_cast<int>(logits.cols());
  LogitLoss out{0.0, RowMatrix(logits.rows(), logits.cols())};
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= k) throw DataError("label " + std::to_string(y) + " outside [0,K)");
    std::span<double> grad(out.dlogits.row(r).data(), static_cast<std::size_t>(k));
    out.value += lse_and_softmax(row_span(logits, r), grad) - logits(r, y);
    grad[static_cast<std::size_t>(y)] -= 1.0;
    for (double& g : grad) g /= n;
  }
  out.value /= n;
  return out;
}

ClassPriorEMA::ClassPriorEMA(int num_classes, double decay)
    : p_(static_cast<std::size_t>(num_classes), 1.0 / num_classes), decay_(decay) {
  if (num_classes < 1) throw ConfigError("class prior needs K >= 1");
  if (!(decay >= 0.0 && decay <= 1.0)) throw ConfigError("prior decay must lie in [0,1]");
}

namespace {

// Softmax rows can underflow to exactly zero; the floor keeps ln(1/p) finite.
constexpr double kPriorFloor = 1e-12;

void renormalize(std::vector<double>& p) {
  for (double& v : p) v = std::max(v, kPriorFloor);
  const double sum = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& v : p) v /= sum;
}

}  // namespace

void ClassPriorEMA::update(const RowMatrix& probs) {
  if (probs.rows() == 0) return;
  if (probs.cols() != static_cast<Eigen::Index>(p_.size()))
    throw ConfigError("prior update: probability width does not match K");
  const Eigen::RowVectorXd mean = probs.colwise().mean();
  for (std::size_t j = 0; j < p_.size(); ++j)
    p_[j] = decay_ * p_[j] + (1.0 - decay_) * mean(static_cast<Eigen::Index>(j));
  renormalize(p_);
}

void ClassPriorEMA::assign(std::span<const double> p) {
  if (p.size() != p_.size()) throw ConfigError("prior restore: wrong class count");
  p_.assign(p.begin(), p.end());
  renormalize(p_);
}

MarginVector margins(const ClassPriorEMA& prior, double lambda_margin) {
  if (!(lambda_margin >= 0.0)) throw ConfigError("lambda_margin must be >= 0");
  MarginVector out;
  out.scale = lambda_margin;
  for (double p : prior.probabilities()) out.m.push_back(lambda_margin * std::log(1.0 / p));
  return out;
}

double aml(std::span<const double> logits, int target, const MarginVector& m,
           std::span<double> grad) {
  const std::size_t k = logits.size();
  if (m.m.size() != k) throw ConfigError("margin vector width does not match logits");
  if (target < 0 || target >= static_cast<int>(k)) throw DataError("AML target outside [0,K)");
  std::vector<double> shifted(k), prob(k);
  for (std::size_t i = 0; i < k; ++i) shifted[i] = logits[i] - m.m[i];
  const double value = lse_and_softmax(shifted, prob) - shifted[static_cast<std::size_t>(target)];
  if (!grad.empty()) {
    for (std::size_t i = 0; i < k; ++i) grad[i] = prob[i];
    grad[static_cast<std::size_t>(target)] -= 1.0;
  }
  return value;
}

LogitLoss unsup_loss(const RowMatrix& strong_logits, std::span<const int> pseudo,
                     std::span<const std::uint8_t> mask, const MarginVector& m) {
  const auto rows = static_cast<std::size_t>(strong_logits.rows());
  if (pseudo.size() != rows || mask.size() != rows)
    throw ConfigError("unsupervised loss: mask/pseudo-labels not aligned with logits");
  LogitLoss out{0.0, RowMatrix::Zero(strong_logits.rows(), strong_logits.cols())};
  if (rows == 0) return out;
  const double n = static_cast<double>(rows);
  const auto k = static_cast<std::size_t>(strong_logits.cols());
  for (std::size_t i = 0; i < rows; ++i) {
    if (!mask[i]) continue;
    const auto r = static_cast<Eigen::Index>(i);
    std::span<double> grad(out.dlogits.row(r).data(), k);
    out.value += aml(row_span(strong_logits, r), pseudo[i], m, grad);
    for (double& g : grad) g /= n;
  }
  out.value /= n;
  return out;
}

LossBreakdown total_loss(double supervised, double unsupervised, double triplet, double lambda_u,
                         double lambda_ahtl) {
  if (!std::isfinite(supervised)) throw NumericFault("L_s", "non-finite supervised loss");
  if (!std::isfinite(unsupervised)) throw NumericFault("L_u", "non-finite unsupervised loss");
  if (!std::isfinite(triplet)) throw NumericFault("L_AHTL", "non-finite triplet loss");
  LossBreakdown b;
  b.supervised = supervised;
  b.unsupervised = unsupervised;
  b.triplet = triplet;
  b.lambda_u = lambda_u;
  b.lambda_ahtl = lambda_ahtl;
  b.total = supervised + lambda_u * unsupervised + lambda_ahtl * triplet;
  if (!std::isfinite(b.total)) throw NumericFault("total", "non-finite total loss");
  return b;
}

}  // namespace ltssl
