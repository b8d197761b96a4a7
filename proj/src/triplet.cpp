#include "ltssl/triplet.hpp"

#include "ltssl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ltssl {

namespace {

std::span<const double> row(const RowMatrix& m, std::size_t r) {
  return {m.row(static_cast<Eigen::Index>(r)).data(), static_cast<std::size_t>(m.cols())};
}

// Softmax of `x * sign` over the whole vector.
std::vector<double> batch_softmax(const std::vector<double>& x, double sign) {
  std::vector<double> out(x.size());
  if (x.empty()) return out;
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : x) hi = std::max(hi, sign * v);
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(sign * x[i] - hi);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

}  // namespace

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    d += t * t;
  }
  return d;
}

TripletBatch mine_hard(std::span<const std::uint32_t> ids, std::span<const int> classes,
                       const RowMatrix& weak_embedding, const RowMatrix& strong_embedding) {
  const std::size_t n = ids.size();
  if (classes.size() != n || static_cast<std::size_t>(weak_embedding.rows()) != n ||
      static_cast<std::size_t>(strong_embedding.rows()) != n)
    throw ConfigError("mining inputs are not aligned");
  if (weak_embedding.cols() != strong_embedding.cols())
    throw ConfigError("weak and strong embeddings differ in width");

  // Pairwise squared distances between weak embeddings, computed once.
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      dist[i * n + j] = dist[j * n + i] = squared_distance(row(weak_embedding, i), row(weak_embedding, j));

  TripletBatch batch;
  for (std::size_t a = 0; a < n; ++a) {
    std::size_t pos = n, neg = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      const double d = dist[a * n + j];
      if (classes[j] == classes[a]) {
        if (pos == n || d > dist[a * n + pos] || (d == dist[a * n + pos] && ids[j] < ids[pos])) pos = j;
      } else {
        if (neg == n || d < dist[a * n + neg] || (d == dist[a * n + neg] && ids[j] < ids[neg])) neg = j;
      }
    }
    if (pos == n || neg == n) continue;
    batch.anchor.push_back(a);
    batch.positive.push_back(pos);
    batch.negative.push_back(neg);
    batch.anchor_class.push_back(classes[a]);
  }

  const auto t = static_cast<Eigen::Index>(batch.size());
  const auto d = weak_embedding.cols();
  batch.anchor_embedding.resize(t, d);
  batch.positive_embedding.resize(t, d);
  batch.negative_embedding.resize(t, d);
  for (Eigen::Index i = 0; i < t; ++i) {
    const auto k = static_cast<std::size_t>(i);
    batch.anchor_embedding.row(i) = weak_embedding.row(static_cast<Eigen::Index>(batch.anchor[k]));
    batch.positive_embedding.row(i) = strong_embedding.row(static_cast<Eigen::Index>(batch.positive[k]));
    batch.negative_embedding.row(i) = strong_embedding.row(static_cast<Eigen::Index>(batch.negative[k]));
  }
  return batch;
}

TripletWeights triplet_weights(const TripletBatch& batch) {
  std::vector<double> ap(batch.size()), an(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ap[i] = squared_distance(row(batch.anchor_embedding, i), row(batch.positive_embedding, i));
    an[i] = squared_distance(row(batch.anchor_embedding, i), row(batch.negative_embedding, i));
  }
  return {batch_softmax(ap, 1.0), batch_softmax(an, -1.0)};
}

TripletLoss ahtl(const TripletBatch& batch, const TripletWeights& weights, double margin) {
  if (!(margin > 0.0)) throw ConfigError("triplet margin must be > 0");
  const std::size_t n = batch.size();
  if (weights.positive.size() != n || weights.negative.size() != n)
    throw ConfigError("triplet weights are not aligned with the batch");
  const auto d = batch.anchor_embedding.cols();
  TripletLoss out;
  out.danchor = RowMatrix::Zero(static_cast<Eigen::Index>(n), d);
  out.dpositive = RowMatrix::Zero(static_cast<Eigen::Index>(n), d);
  out.dnegative = RowMatrix::Zero(static_cast<Eigen::Index>(n), d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double dap = squared_distance(row(batch.anchor_embedding, i), row(batch.positive_embedding, i));
    const double dan = squared_distance(row(batch.anchor_embedding, i), row(batch.negative_embedding, i));
    out.mean_ap += dap;
    out.mean_an += dan;
    const double wp = weights.positive[i], wn = weights.negative[i];
    const double hinge = wp * dap - wn * dan + margin;
    if (hinge <= 0.0) continue;
    ++out.active;
    out.value += hinge;
    const auto diff_p = batch.anchor_embedding.row(r) - batch.positive_embedding.row(r);
    const auto diff_n = batch.anchor_embedding.row(r) - batch.negative_embedding.row(r);
    out.danchor.row(r) = 2.0 * wp * diff_p - 2.0 * wn * diff_n;
    out.dpositive.row(r) = -2.0 * wp * diff_p;
    out.dnegative.row(r) = 2.0 * wn * diff_n;
  }
  if (n > 0) {
    out.mean_ap /= static_cast<double>(n);
    out.mean_an /= static_cast<double>(n);
  }
  return out;
}

}  // namespace ltssl
