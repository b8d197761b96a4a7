#pragma once

#include "ltssl/config.hpp"
#include "ltssl/dataset.hpp"
#include "ltssl/energy.hpp"
#include "ltssl/losses.hpp"
#include "ltssl/model.hpp"
#include "ltssl/report.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace ltssl {

struct TrainState {
  ModelParams params;
  ModelParams momentum;  // same layout as params
  EmaParams ema;
  ClassPriorEMA prior;
  std::int64_t iteration = 0;
  std::uint64_t seed = 0;
};

TrainState init_state(const TrainConfig& cfg, const SmallConvNet& net);

/// Cosine: base * cos(7 pi t / (16 total)); constant: base. total == 0 gives base.
double lr_schedule(std::int64_t iteration, std::int64_t total, double base, Schedule schedule);

/// The samples one step trains on. Unlabeled samples carry no label.
struct StepInputs {
  std::vector<const ImageSample*> labeled;
  std::vector<const UnlabeledSample*> unlabeled;
};

/// Batch for `iteration`, drawn with replacement from the split.
StepInputs draw_step_inputs(const TrainConfig& cfg, const DatasetSplit& split,
                            std::int64_t iteration);

struct StepMetrics {
  std::int64_t step = 0;
  double lr = 0.0;
  LossBreakdown loss;
  std::size_t selected = 0;
  std::optional<double> min_energy;   // over the weak unlabeled batch
  std::optional<double> mean_energy;
  std::size_t triplets = 0;
  std::size_t active = 0;
  std::optional<double> mean_ap;
  std::optional<double> mean_an;
  double grad_norm = 0.0;  // before clipping
};

struct StepGradient {
  ModelParams grad;  // loss gradient, without weight decay
  StepMetrics metrics;
  ClassPriorEMA prior;  // prior after this step's update
};

/// Everything in a step up to the gradient; `state` is not modified.
StepGradient step_gradient(const TrainConfig& cfg, const SmallConvNet& net, const TrainState& state,
                           const StepInputs& inputs);

/// Gradient clipping, weight decay, momentum SGD, EMA blend, prior update, iteration + 1.
void apply_update(const TrainConfig& cfg, TrainState& state, const StepGradient& step);

/// step_gradient followed by apply_update.
StepMetrics train_step(const TrainConfig& cfg, const SmallConvNet& net, TrainState& state,
                       const StepInputs& inputs);

RowMatrix predict_logits(const SmallConvNet& net, const ModelParams& params,
                         std::span<const ImageSample> samples);
RowMatrix predict_logits(const SmallConvNet& net, const ModelParams& params,
                         std::span<const UnlabeledSample> samples);

/// Confusion matrix of `params` on labeled samples. Throws DataError if a
/// sample has no label.
ConfusionMatrix evaluate(const SmallConvNet& net, const ModelParams& params,
                         std::span<const ImageSample> test);

/// Gate applied to the unaugmented unlabeled split under `params`.
Selection select_unlabeled(const SmallConvNet& net, const ModelParams& params,
                           const DatasetSplit& split, const SelectionConfig& gate,
                           std::int64_t iteration);

struct EvalPoint {
  std::int64_t step = 0;
  double accuracy = 0.0;
  std::optional<double> head_recall;
  std::optional<double> tail_recall;
  std::vector<std::optional<double>> recall;
  PseudoLabelPoint pseudo;
};

struct FitOptions {
  std::filesystem::path out_dir;  // empty: keep everything in memory
  bool resume = false;
  std::ostream* progress = nullptr;
  std::optional<int> tail_count;  // default ceil(K/2)
};

struct FitResult {
  TrainState state;
  std::vector<EvalPoint> evals;
  MetricsReport report;  // final EMA model
  double best_accuracy = 0.0;
  std::int64_t best_step = 0;
  std::string metrics_csv;
  std::string eval_csv;
  std::string audit_jsonl;
};

/// Runs cfg.iterations steps, evaluating the EMA model on the test split at
/// step 0, every eval_interval steps and at the end. With an out_dir it
/// writes metrics.csv, eval.csv, audit.jsonl, report.json, config.json and
/// the checkpoints best.ckpt, final.ckpt and last.ckpt.
FitResult fit(const TrainConfig& cfg, const DatasetSplit& split, const FitOptions& options = {});

/// Header of metrics.csv.
std::string metrics_csv_header();

}  // namespace ltssl
