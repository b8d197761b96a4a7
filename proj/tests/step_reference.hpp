#pragma once

// Straight-line recomputation of one training step's loss with the weak
// unlabeled branch (pseudo-labels, mask, prior, mining, triplet weights) held
// at the values it takes for `frozen_params`. Used to finite-difference the
// trainer's gradient.

#include "ltssl/augment.hpp"
#include "ltssl/config.hpp"
#include "ltssl/dataset.hpp"
#include "ltssl/energy.hpp"
#include "ltssl/gradcheck.hpp"
#include "ltssl/losses.hpp"
#include "ltssl/model.hpp"
#include "ltssl/trainer.hpp"
#include "ltssl/triplet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace ltssl::testing {

// An all-zero row (every final ReLU dead) stays zero.
inline RowMatrix unit_rows(const RowMatrix& x) {
  RowMatrix y = x;
  for (Eigen::Index r = 0; r < y.rows(); ++r) y.row(r) /= std::max(y.row(r).norm(), 1e-12);
  return y;
}

class StepReference {
 public:
  StepReference(const TrainConfig& cfg, const SmallConvNet& net, const TrainState& state,
                const StepInputs& inputs)
      : cfg_(cfg), net_(net) {
    const int h = net.config().image_height, w = net.config().image_width;
    nl_ = static_cast<int>(inputs.labeled.size());
    nu_ = static_cast<int>(inputs.unlabeled.size());
    batch_ = ImageBatch(nl_ + nu_, h, w);
    ImageBatch weak_u(nu_, h, w);
    for (int i = 0; i < nl_; ++i) {
      const ImageSample& s = *inputs.labeled[static_cast<std::size_t>(i)];
      labels_.push_back(*s.label);
      Rng rng = augment_stream(cfg.seed, StreamTag::kAugLabeled, s.id, state.iteration);
      const auto v = weak(s.pixels, h, w, cfg.augment, rng);
      std::copy(v.begin(), v.end(), batch_.image(i).begin());
    }
    for (int j = 0; j < nu_; ++j) {
      const UnlabeledSample& s = *inputs.unlabeled[static_cast<std::size_t>(j)];
      ids_.push_back(s.id);
      Rng rng = augment_stream(cfg.seed, StreamTag::kAugUnlabeled, s.id, state.iteration);
      const AugmentedPair p = augment_pair(s.id, s.pixels, h, w, cfg.augment, rng);
      std::copy(p.weak.begin(), p.weak.end(), weak_u.image(j).begin());
      std::copy(p.strong.begin(), p.strong.end(), batch_.image(nl_ + j).begin());
    }
    const ForwardOutput wo = net.forward(state.params, weak_u);
    sel_ = select(wo.logits, ids_, cfg.selection, state.iteration);
    ClassPriorEMA prior = state.prior;
    prior.update(softmax_rows(wo.logits));
    margin_ = margins(prior, cfg.lambda_margin);

    std::vector<std::uint32_t> sid;
    std::vector<int> scls;
    for (int j = 0; j < nu_; ++j) {
      if (!sel_.mask[static_cast<std::size_t>(j)]) continue;
      rows_.push_back(j);
      sid.push_back(ids_[static_cast<std::size_t>(j)]);
      scls.push_back(sel_.predicted[static_cast<std::size_t>(j)]);
    }
    RowMatrix weak_emb(static_cast<Eigen::Index>(rows_.size()), wo.embedding.cols());
    for (std::size_t r = 0; r < rows_.size(); ++r)
      weak_emb.row(static_cast<Eigen::Index>(r)) = wo.embedding.row(rows_[r]);
    if (cfg.normalize_embeddings) weak_emb = unit_rows(weak_emb);
    weak_emb_ = weak_emb;
    const RowMatrix strong0 = strong_embeddings(state.params);
    mined_ = mine_hard(sid, scls, weak_emb_, strong0);
    weights_ = triplet_weights(mined_);
  }

  std::size_t triplets() const { return mined_.size(); }
  std::size_t selected() const { return rows_.size(); }

  double value(const ModelParams& q) const {
    const ForwardOutput o = net_.forward(q, batch_);
    double loss = ce_supervised(o.logits.topRows(nl_), labels_).value;
    loss += cfg_.lambda_u *
            unsup_loss(o.logits.bottomRows(nu_), sel_.predicted, sel_.mask, margin_).value;
    if (cfg_.lambda_ahtl > 0.0 && rows_.size() >= 2)
      loss += cfg_.lambda_ahtl * ahtl(batch_at(o), weights_, cfg_.triplet_margin).value;
    return loss;
  }

  // ReLU pattern of the trained forward pass plus the active hinges.
  std::uint64_t region(const ModelParams& q) const {
    ForwardCache c;
    const ForwardOutput o = net_.forward(q, batch_, c);
    std::uint64_t sig = c.relu_pattern();
    if (rows_.size() >= 2) {
      const TripletBatch b = batch_at(o);
      for (std::size_t i = 0; i < b.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double dap = (b.anchor_embedding.row(r) - b.positive_embedding.row(r)).squaredNorm();
        const double dan = (b.anchor_embedding.row(r) - b.negative_embedding.row(r)).squaredNorm();
        const bool on = weights_.positive[i] * dap - weights_.negative[i] * dan + cfg_.triplet_margin > 0;
        sig = sig * 1099511628211ULL + (on ? 2 : 1);
      }
    }
    return sig;
  }

 private:
  RowMatrix strong_embeddings(const ModelParams& q) const {
    return select_strong(net_.forward(q, batch_));
  }

  RowMatrix select_strong(const ForwardOutput& o) const {
    RowMatrix s(static_cast<Eigen::Index>(rows_.size()), o.embedding.cols());
    for (std::size_t r = 0; r < rows_.size(); ++r)
      s.row(static_cast<Eigen::Index>(r)) = o.embedding.row(nl_ + rows_[r]);
    return cfg_.normalize_embeddings ? unit_rows(s) : s;
  }

  TripletBatch batch_at(const ForwardOutput& o) const {
    const RowMatrix s = select_strong(o);
    TripletBatch b = mined_;
    for (std::size_t t = 0; t < b.size(); ++t) {
      b.positive_embedding.row(static_cast<Eigen::Index>(t)) = s.row(static_cast<Eigen::Index>(b.positive[t]));
      b.negative_embedding.row(static_cast<Eigen::Index>(t)) = s.row(static_cast<Eigen::Index>(b.negative[t]));
    }
    return b;
  }

  const TrainConfig& cfg_;
  const SmallConvNet& net_;
  int nl_ = 0, nu_ = 0;
  ImageBatch batch_;
  std::vector<int> labels_;
  std::vector<std::uint32_t> ids_;
  Selection sel_;
  MarginVector margin_;
  std::vector<int> rows_;
  RowMatrix weak_emb_;
  TripletBatch mined_;
  TripletWeights weights_;
};

/// Tiny float64 setup: 8x8 images, K = 3, channels {2, 3}, every unlabeled
/// sample selected.
inline TrainConfig tiny_step_config(std::uint64_t seed, bool normalize) {
  TrainConfig c = default_config(3);
  c.image_size = 8;
  c.channels = {2, 3};
  c.precision = Precision::kFloat64;
  c.batch_labeled = 4;
  c.unlabeled_ratio = 3;
  c.selection.tau_e = 100.0;
  c.selection.temperature = 1.0;
  c.normalize_embeddings = normalize;
  c.seed = seed;
  return c;
}

/// Runs the finite-difference comparison for one random instance.
inline GradCheckReport check_step_gradient(const TrainConfig& cfg, const DatasetSplit& split,
                                           std::uint64_t param_seed, double tolerance,
                                           const GradCheckOptions& options = {}) {
  const SmallConvNet net(cfg.arch());
  TrainState state = init_state(cfg, net);
  state.params = net.init_params(param_seed);
  state.iteration = static_cast<std::int64_t>(param_seed % 97);
  const StepInputs inputs = draw_step_inputs(cfg, split, state.iteration);
  const StepReference ref(cfg, net, state, inputs);
  LossEvaluator loss;
  loss.value = [&](const ModelParams& q) { return ref.value(q); };
  loss.gradient = [&](const ModelParams& q) {
    TrainState s = state;
    s.params = q;
    return step_gradient(cfg, net, s, inputs).grad;
  };
  loss.region = [&](const ModelParams& q) { return ref.region(q); };
  return grad_check(loss, state.params, tolerance, options);
}

}  // namespace ltssl::testing
