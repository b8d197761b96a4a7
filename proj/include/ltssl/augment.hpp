#pragma once

#include "ltssl/rng.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ltssl {

struct WeakAugConfig {
  double flip_prob = 0.5;
  double max_shift = 0.125;  // fraction of each dimension
};

enum class StrongOp { kRotate, kShear, kContrast, kGamma, kSpeckle, kCutout };

std::string to_string(StrongOp op);
StrongOp strong_op_from_string(const std::string& name);

struct StrongAugConfig {
  int n_ops = 2;
  std::vector<StrongOp> op_pool = {StrongOp::kRotate,  StrongOp::kShear,   StrongOp::kContrast,
                                   StrongOp::kGamma,   StrongOp::kSpeckle, StrongOp::kCutout};
  double max_rotation_deg = 15.0;
  double max_shear = 0.2;
  double contrast_min = 0.5;
  double contrast_max = 1.5;
  double gamma_min = 0.7;
  double gamma_max = 1.4;
  double max_speckle_sigma = 0.1;
  double cutout_fraction = 0.25;
};

struct AugmentConfig {
  WeakAugConfig weak;
  StrongAugConfig strong;
  void validate() const;
};

/// Concrete weak transform: optional horizontal flip then an integer shift
/// with zero fill.
struct WeakPlan {
  bool flip = false;
  int shift_x = 0;
  int shift_y = 0;
};

struct StrongStep {
  StrongOp op = StrongOp::kRotate;
  double magnitude = 0.0;  // degrees, shear factor, contrast/gamma factor, or sigma
  int x = 0;               // cutout corner
  int y = 0;
  std::uint64_t noise_seed = 0;
};

struct StrongPlan {
  WeakPlan weak;
  std::vector<StrongStep> steps;
};

WeakPlan draw_weak(const WeakAugConfig& cfg, int height, int width, Rng& rng);
/// Draws the weak plan first, so a strong plan shares the weak stream prefix.
StrongPlan draw_strong(const AugmentConfig& cfg, int height, int width, Rng& rng);

std::vector<float> apply_weak(const WeakPlan& plan, std::span<const float> pixels, int height,
                              int width);
/// Applies the extra strong steps to an already weakly augmented image.
std::vector<float> apply_strong_steps(std::span<const StrongStep> steps, const AugmentConfig& cfg,
                                      std::span<const float> weak_pixels, int height, int width);

std::vector<float> weak(std::span<const float> pixels, int height, int width,
                        const AugmentConfig& cfg, Rng& rng);
std::vector<float> strong(std::span<const float> pixels, int height, int width,
                          const AugmentConfig& cfg, Rng& rng);

struct AugmentedPair {
  std::uint32_t source_id = 0;
  std::vector<float> weak;
  std::vector<float> strong;  // extra transforms applied on top of `weak`
};

AugmentedPair augment_pair(std::uint32_t id, std::span<const float> pixels, int height, int width,
                           const AugmentConfig& cfg, Rng& rng);

/// Per-sample stream keyed by (seed, tag, sample id, iteration).
inline Rng augment_stream(std::uint64_t seed, StreamTag tag, std::uint32_t id,
                          std::int64_t iteration) {
  return make_stream(seed, tag, id, static_cast<std::uint64_t>(iteration));
}

}  // namespace ltssl
