#pragma once

#include "ltssl/augment.hpp"
#include "ltssl/dataset.hpp"
#include "ltssl/energy.hpp"
#include "ltssl/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ltssl {

enum class Schedule { kCosine, kConstant };

/// Every hyperparameter of a training run. Serialized as a flat JSON object
/// whose keys are listed in docs/formats.md.
struct TrainConfig {
  // data
  int num_classes = 10;
  int image_size = 32;
  double label_fraction = 0.2;

  // architecture
  std::vector<int> channels = {32, 64, 128};
  Precision precision = Precision::kFloat32;
  bool normalize_embeddings = true;

  // optimizer
  double lr = 0.03;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double grad_clip = 5.0;  // global L2 norm cap on the loss gradient; 0 disables
  Schedule schedule = Schedule::kCosine;
  std::int64_t iterations = 4000;
  int batch_labeled = 16;
  int unlabeled_ratio = 7;
  double ema_decay = 0.999;

  // pseudo-label gate
  SelectionConfig selection;

  // losses
  double lambda_margin = 0.5;
  double prior_decay = 0.99;
  double triplet_margin = 0.3;
  double lambda_u = 1.0;
  double lambda_ahtl = 1.5;

  AugmentConfig augment;

  std::uint64_t seed = 0;
  std::int64_t eval_interval = 200;

  /// Throws ConfigError on any out-of-range value.
  void validate() const;

  ArchConfig arch() const;
  BatchPlan batch_plan() const { return {batch_labeled, unlabeled_ratio}; }

  nlohmann::ordered_json to_json() const;
  /// Unknown keys are a ConfigError. Missing keys keep their defaults.
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Applies one `key=value` override; the value is parsed as JSON when
  /// possible and as a bare string otherwise.
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, const nlohmann::json& value);

  /// 16 hex digits of FNV-1a over the canonical JSON form.
  std::string fingerprint() const;
};

/// Defaults for a class count: tau_e = -9.5, T = 1 for 10-class data and
/// tau_e = -9, T = 0.5 for 5-class data; other K keep the 10-class values.
TrainConfig default_config(int num_classes);

/// Confidence-gated baseline: tau_c gate, plain cross-entropy consistency,
/// no triplet term.
TrainConfig baseline_config(TrainConfig base, double tau_c = 0.95);

}  // namespace ltssl
