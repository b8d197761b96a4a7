#include "ltssl/augment.hpp"

#include "ltssl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace ltssl {

std::string to_string(StrongOp op) {
  switch (op) {
    case StrongOp::kRotate: return "rotate";
    case StrongOp::kShear: return "shear";
    case StrongOp::kContrast: return "contrast";
    case StrongOp::kGamma: return "gamma";
    case StrongOp::kSpeckle: return "speckle";
    case StrongOp::kCutout: return "cutout";
  }
  return "unknown";
}

StrongOp strong_op_from_string(const std::string& name) {
  for (StrongOp op : {StrongOp::kRotate, StrongOp::kShear, StrongOp::kContrast, StrongOp::kGamma,
                      StrongOp::kSpeckle, StrongOp::kCutout})
    if (to_string(op) == name) return op;
  throw ConfigError("unknown strong augmentation op '" + name + "'");
}

void AugmentConfig::validate() const {
  if (!(weak.flip_prob >= 0.0 && weak.flip_prob <= 1.0))
    throw ConfigError("weak.flip_prob must lie in [0,1]");
  if (!(weak.max_shift >= 0.0 && weak.max_shift < 0.5))
    throw ConfigError("weak.max_shift must lie in [0,0.5)");
  if (strong.n_ops < 0 || strong.n_ops > static_cast<int>(strong.op_pool.size()))
    throw ConfigError("strong.n_ops must lie in [0, |strong.op_pool|]");
  if (strong.contrast_min > strong.contrast_max || strong.contrast_min < 0.0)
    throw ConfigError("strong contrast bounds are invalid");
  if (strong.gamma_min > strong.gamma_max || strong.gamma_min <= 0.0)
    throw ConfigError("strong gamma bounds are invalid");
  if (strong.max_speckle_sigma < 0.0 || strong.max_rotation_deg < 0.0 || strong.max_shear < 0.0)
    throw ConfigError("strong magnitude bounds must be non-negative");
  if (!(strong.cutout_fraction > 0.0 && strong.cutout_fraction <= 1.0))
    throw ConfigError("strong cutout fraction must lie in (0,1]");
}

WeakPlan draw_weak(const WeakAugConfig& cfg, int height, int width, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  WeakPlan plan;
  plan.flip = unit(rng) < cfg.flip_prob;
  const int max_x = static_cast<int>(std::lround(cfg.max_shift * width));
  const int max_y = static_cast<int>(std::lround(cfg.max_shift * height));
  plan.shift_x = std::uniform_int_distribution<int>(-max_x, max_x)(rng);
  plan.shift_y = std::uniform_int_distribution<int>(-max_y, max_y)(rng);
  return plan;
}

StrongPlan draw_strong(const AugmentConfig& cfg, int height, int width, Rng& rng) {
  StrongPlan plan;
  plan.weak = draw_weak(cfg.weak, height, width, rng);

  // Partial Fisher-Yates: n_ops distinct ops, each equally likely.
  std::vector<StrongOp> pool = cfg.strong.op_pool;
  const int n = std::min<int>(cfg.strong.n_ops, static_cast<int>(pool.size()));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const int j = std::uniform_int_distribution<int>(i, static_cast<int>(pool.size()) - 1)(rng);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    StrongStep step;
    step.op = pool[static_cast<std::size_t>(i)];
    const auto& s = cfg.strong;
    switch (step.op) {
      case StrongOp::kRotate: step.magnitude = s.max_rotation_deg * (2.0 * unit(rng) - 1.0); break;
      case StrongOp::kShear: step.magnitude = s.max_shear * (2.0 * unit(rng) - 1.0); break;
      case StrongOp::kContrast:
        step.magnitude = s.contrast_min + (s.contrast_max - s.contrast_min) * unit(rng);
        break;
      case StrongOp::kGamma:
        step.magnitude = s.gamma_min + (s.gamma_max - s.gamma_min) * unit(rng);
        break;
      case StrongOp::kSpeckle:
        step.magnitude = s.max_speckle_sigma * unit(rng);
        step.noise_seed = rng();
        break;
      case StrongOp::kCutout: {
        const int side_x = std::max(1, static_cast<int>(std::lround(s.cutout_fraction * width)));
        const int side_y = std::max(1, static_cast<int>(std::lround(s.cutout_fraction * height)));
        step.x = std::uniform_int_distribution<int>(0, width - side_x)(rng);
        step.y = std::uniform_int_distribution<int>(0, height - side_y)(rng);
        break;
      }
    }
    plan.steps.push_back(step);
  }
  return plan;
}

std::vector<float> apply_weak(const WeakPlan& plan, std::span<const float> pixels, int height,
                              int width) {
  std::vector<float> out(pixels.size(), 0.0f);
  for (int y = 0; y < height; ++y) {
    const int sy = y - plan.shift_y;
    if (sy < 0 || sy >= height) continue;
    for (int x = 0; x < width; ++x) {
      int sx = x - plan.shift_x;
      if (sx < 0 || sx >= width) continue;
      if (plan.flip) sx = width - 1 - sx;
      out[static_cast<std::size_t>(y) * width + x] =
          std::clamp(pixels[static_cast<std::size_t>(sy) * width + sx], 0.0f, 1.0f);
    }
  }
  return out;
}

namespace {

float bilinear(std::span<const float> img, int height, int width, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  auto at = [&](int xi, int yi) -> double {
    if (xi < 0 || yi < 0 || xi >= width || yi >= height) return 0.0;
    return img[static_cast<std::size_t>(yi) * width + xi];
  };
  const double v = (1 - fx) * (1 - fy) * at(x0, y0) + fx * (1 - fy) * at(x0 + 1, y0) +
                   (1 - fx) * fy * at(x0, y0 + 1) + fx * fy * at(x0 + 1, y0 + 1);
  return static_cast<float>(v);
}

// Inverse-maps each output pixel through the 2x2 matrix `inv` about the centre.
std::vector<float> warp(std::span<const float> img, int height, int width, double a, double b,
                        double c, double d) {
  std::vector<float> out(img.size());
  const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double dx = x - cx, dy = y - cy;
      out[static_cast<std::size_t>(y) * width + x] =
          bilinear(img, height, width, cx + a * dx + b * dy, cy + c * dx + d * dy);
    }
  }
  return out;
}

}  // namespace

std::vector<float> apply_strong_steps(std::span<const StrongStep> steps, const AugmentConfig& cfg,
                                      std::span<const float> weak_pixels, int height, int width) {
  std::vector<float> img(weak_pixels.begin(), weak_pixels.end());
  for (const StrongStep& step : steps) {
    switch (step.op) {
      case StrongOp::kRotate: {
        if (step.magnitude == 0.0) break;
        const double t = step.magnitude * std::numbers::pi / 180.0;
        img = warp(img, height, width, std::cos(t), std::sin(t), -std::sin(t), std::cos(t));
        break;
      }
      case StrongOp::kShear:
        if (step.magnitude == 0.0) break;
        img = warp(img, height, width, 1.0, step.magnitude, 0.0, 1.0);
        break;
      case StrongOp::kContrast: {
        const double mean = std::accumulate(img.begin(), img.end(), 0.0) / static_cast<double>(img.size());
        for (float& v : img) v = static_cast<float>(mean + (v - mean) * step.magnitude);
        break;
      }
      case StrongOp::kGamma:
        for (float& v : img) v = static_cast<float>(std::pow(std::max(0.0f, v), step.magnitude));
        break;
      case StrongOp::kSpeckle: {
        if (step.magnitude == 0.0) break;
        Rng noise(step.noise_seed);
        std::normal_distribution<double> normal(0.0, step.magnitude);
        for (float& v : img) v = static_cast<float>(v + normal(noise));
        break;
      }
      case StrongOp::kCutout: {
        const int side_x = std::max(1, static_cast<int>(std::lround(cfg.strong.cutout_fraction * width)));
        const int side_y = std::max(1, static_cast<int>(std::lround(cfg.strong.cutout_fraction * height)));
        for (int y = step.y; y < std::min(height, step.y + side_y); ++y)
          for (int x = step.x; x < std::min(width, step.x + side_x); ++x)
            img[static_cast<std::size_t>(y) * width + x] = 0.0f;
        break;
      }
    }
    for (float& v : img) v = std::clamp(v, 0.0f, 1.0f);
  }
  return img;
}

std::vector<float> weak(std::span<const float> pixels, int height, int width,
                        const AugmentConfig& cfg, Rng& rng) {
  return apply_weak(draw_weak(cfg.weak, height, width, rng), pixels, height, width);
}

std::vector<float> strong(std::span<const float> pixels, int height, int width,
                          const AugmentConfig& cfg, Rng& rng) {
  const StrongPlan plan = draw_strong(cfg, height, width, rng);
  const auto w = apply_weak(plan.weak, pixels, height, width);
  return apply_strong_steps(plan.steps, cfg, w, height, width);
}

AugmentedPair augment_pair(std::uint32_t id, std::span<const float> pixels, int height, int width,
                           const AugmentConfig& cfg, Rng& rng) {
  const StrongPlan plan = draw_strong(cfg, height, width, rng);
  AugmentedPair pair;
  pair.source_id = id;
  pair.weak = apply_weak(plan.weak, pixels, height, width);
  pair.strong = apply_strong_steps(plan.steps, cfg, pair.weak, height, width);
  return pair;
}

}  // namespace ltssl
