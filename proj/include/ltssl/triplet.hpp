#pragma once

#include "ltssl/model.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ltssl {

/// Hard triplets over pseudo-labeled samples. Indices refer to rows of the
/// candidate arrays passed to mine_hard.
struct TripletBatch {
  std::vector<std::size_t> anchor;
  std::vector<std::size_t> positive;
  std::vector<std::size_t> negative;
  std::vector<int> anchor_class;
  RowMatrix anchor_embedding;    // weak-view embedding of each anchor
  RowMatrix positive_embedding;  // strong-view embedding of the hardest positive
  RowMatrix negative_embedding;  // strong-view embedding of the hardest negative

  std::size_t size() const { return anchor.size(); }
};

struct TripletWeights {
  std::vector<double> positive;
  std::vector<double> negative;
};

double squared_distance(std::span<const double> a, std::span<const double> b);

/// For every candidate with at least one same-class peer and one other-class
/// candidate: the hardest positive is the peer farthest from it and the
/// hardest negative the other-class candidate nearest to it, both measured by
/// squared Euclidean distance between weak embeddings. Ties go to the lowest
/// id. Candidates failing either condition are skipped.
TripletBatch mine_hard(std::span<const std::uint32_t> ids, std::span<const int> classes,
                       const RowMatrix& weak_embedding, const RowMatrix& strong_embedding);

/// Batch softmax of anchor-positive distances (w_p) and of negated
/// anchor-negative distances (w_n), distances taken between the anchor's weak
/// embedding and the strong embeddings. Treated as constants by ahtl().
TripletWeights triplet_weights(const TripletBatch& batch);

struct TripletLoss {
  double value = 0.0;
  RowMatrix danchor;  // d loss / d anchor_embedding
  RowMatrix dpositive;
  RowMatrix dnegative;
  std::size_t active = 0;  // triplets with a positive hinge
  double mean_ap = 0.0;    // mean squared anchor-positive distance
  double mean_an = 0.0;
};

/// sum_i max(w_p,i * |a_i - p_i|^2 - w_n,i * |a_i - n_i|^2 + margin, 0).
/// Inactive hinges (argument <= 0) contribute zero value and zero gradient.
/// Throws ConfigError unless margin > 0.
TripletLoss ahtl(const TripletBatch& batch, const TripletWeights& weights, double margin);

}  // namespace ltssl
