#pragma once

#include "ltssl/model.hpp"
#include "ltssl/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace ltssl {

struct ImageSample {
  std::uint32_t id = 0;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // row-major, values in [0,1]
  std::optional<int> label;
};

/// What the trainer sees of an unlabeled image. There is deliberately no
/// label member; ground truth for audits lives in HiddenLabels.
struct UnlabeledSample {
  std::uint32_t id = 0;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;
};

/// Ground truth of the unlabeled split, reachable only by reporting code.
class HiddenLabels {
 public:
  void set(std::uint32_t id, int label) { labels_[id] = label; }
  std::optional<int> lookup(std::uint32_t id) const;
  std::size_t size() const { return labels_.size(); }
  /// Per-class count of hidden labels.
  std::vector<std::size_t> class_counts(int num_classes) const;

 private:
  std::unordered_map<std::uint32_t, int> labels_;
};

struct LongTailSpec {
  int head_count = 100;         // N, samples in the largest class
  double imbalance_ratio = 10;  // IR = N_1 / N_K
  int num_classes = 10;         // K
};

/// N_k = round(N * IR^{-(k-1)/(K-1)}), nearest integer (halves away from
/// zero), at least 1. counts[0] == N and counts[K-1] == round(N/IR).
std::vector<int> longtail_counts(const LongTailSpec& spec);

struct SynthConfig {
  int num_classes = 5;
  int height = 32;
  int width = 32;
  double speckle_looks = 4.0;  // gamma shape L of the multiplicative speckle
  double jitter = 1.0;         // scales per-sample pose, extent and scatterer variation
};

/// Synthetic SAR-like chips: an elongated bright target whose orientation,
/// extent and scatterer layout are class specific, jittered per sample and
/// multiplied by unit-mean gamma speckle. Sample ids run from `first_id` in
/// class-major order. Pure function of (seed, tag, class, index).
std::vector<ImageSample> synth_generate(const SynthConfig& cfg, std::span<const int> counts,
                                        std::uint64_t seed, std::uint32_t first_id = 0,
                                        StreamTag tag = StreamTag::kGenerate);

/// Keeps the first `counts[k]` samples of each class k (in a seeded shuffle).
std::vector<ImageSample> subsample_per_class(std::span<const ImageSample> pool,
                                             std::span<const int> counts, std::uint64_t seed);

struct DatasetSplit {
  int num_classes = 0;
  int height = 0;
  int width = 0;
  std::vector<ImageSample> labeled;
  std::vector<UnlabeledSample> unlabeled;
  HiddenLabels hidden;
  std::vector<ImageSample> test;

  /// Per-class counts of the labeled split.
  std::vector<std::size_t> labeled_class_counts() const;
};

/// Per class, ceil(fraction * count) samples (in a seeded shuffle) become
/// labeled and the rest unlabeled. Samples whose label is absent go straight
/// to the unlabeled split without an audit label.
DatasetSplit make_splits(std::span<const ImageSample> pool, std::vector<ImageSample> test,
                         int num_classes, double label_fraction, std::uint64_t seed);

struct BatchPlan {
  int labeled_batch = 16;
  int unlabeled_ratio = 7;
  int unlabeled_batch() const { return labeled_batch * unlabeled_ratio; }
};

/// Indices into the labeled / unlabeled splits.
struct BatchDraw {
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled;
};

/// Uniform sampling with replacement, seeded by (seed, iteration).
/// An empty unlabeled split yields an empty unlabeled draw.
BatchDraw sample_batches(const DatasetSplit& split, const BatchPlan& plan, std::uint64_t seed,
                         std::int64_t iteration);

/// Stacks the given samples into a batch.
ImageBatch stack(std::span<const ImageSample* const> samples);
ImageBatch stack(std::span<const ImageSample> samples);

// ---------------------------------------------------------------------------
// Dataset container file

struct DatasetFile {
  int num_classes = 0;
  int height = 0;
  int width = 0;
  std::vector<ImageSample> samples;  // label absent <=> stored as -1
};

void write_dataset(const std::filesystem::path& path, const DatasetFile& data);
DatasetFile read_dataset(const std::filesystem::path& path);

}  // namespace ltssl
