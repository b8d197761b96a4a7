#include <doctest.h>

#include "ltssl/augment.hpp"
#include "ltssl/errors.hpp"

#include <array>
#include <random>

using namespace ltssl;

namespace {

std::vector<float> ramp(int h, int w) {
  std::vector<float> px(static_cast<std::size_t>(h * w));
  for (int i = 0; i < h * w; ++i) px[static_cast<std::size_t>(i)] = static_cast<float>(i) / static_cast<float>(h * w);
  return px;
}

}  // namespace

TEST_CASE("weak plan without flip or shift is the identity") {
  const auto px = ramp(8, 6);
  CHECK(apply_weak(WeakPlan{}, px, 8, 6) == px);
}

TEST_CASE("flip and shift move pixels with zero fill") {
  const auto px = ramp(4, 4);
  const auto flipped = apply_weak({true, 0, 0}, px, 4, 4);
  CHECK(flipped[0] == px[3]);
  CHECK(flipped[3] == px[0]);
  const auto shifted = apply_weak({false, 1, 0}, px, 4, 4);
  CHECK(shifted[0] == 0.0f);
  CHECK(shifted[1] == px[0]);
}

TEST_CASE("zero images stay zero") {
  const std::vector<float> zeros(32 * 32, 0.0f);
  AugmentConfig cfg;
  cfg.strong.op_pool = {StrongOp::kRotate, StrongOp::kShear, StrongOp::kContrast, StrongOp::kGamma,
                        StrongOp::kCutout};
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(s);
    CHECK(weak(zeros, 32, 32, cfg, rng) == zeros);
    Rng rng2(s);
    CHECK(strong(zeros, 32, 32, cfg, rng2) == zeros);
  }
}

TEST_CASE("outputs stay in [0,1] and are deterministic per stream") {
  AugmentConfig cfg;
  const auto px = ramp(32, 32);
  for (std::uint32_t id = 0; id < 30; ++id) {
    Rng a = augment_stream(5, StreamTag::kAugUnlabeled, id, 17);
    Rng b = augment_stream(5, StreamTag::kAugUnlabeled, id, 17);
    const AugmentedPair pa = augment_pair(id, px, 32, 32, cfg, a);
    const AugmentedPair pb = augment_pair(id, px, 32, 32, cfg, b);
    CHECK(pa.weak == pb.weak);
    CHECK(pa.strong == pb.strong);
    for (float v : pa.strong) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_CASE("strong with no extra steps equals weak") {
  AugmentConfig cfg;
  const auto px = ramp(16, 16);
  Rng rng(3);
  const StrongPlan plan = draw_strong(cfg, 16, 16, rng);
  const auto w = apply_weak(plan.weak, px, 16, 16);
  CHECK(apply_strong_steps({}, cfg, w, 16, 16) == w);
  // The strong plan shares its weak prefix with a weak-only draw.
  Rng rng2(3);
  const WeakPlan wp = draw_weak(cfg.weak, 16, 16, rng2);
  CHECK(wp.flip == plan.weak.flip);
  CHECK(wp.shift_x == plan.weak.shift_x);
  CHECK(wp.shift_y == plan.weak.shift_y);
}

TEST_CASE("each strong op is drawn with frequency 1/3") {
  AugmentConfig cfg;
  std::array<int, 6> hits{};
  const int draws = 10000;
  Rng rng(11);
  for (int i = 0; i < draws; ++i) {
    const StrongPlan p = draw_strong(cfg, 32, 32, rng);
    REQUIRE(p.steps.size() == 2);
    CHECK(p.steps[0].op != p.steps[1].op);
    for (const auto& s : p.steps) ++hits[static_cast<std::size_t>(s.op)];
  }
  for (int h : hits) CHECK(std::abs(h / static_cast<double>(draws) - 1.0 / 3.0) <= 0.02);
}

TEST_CASE("shift stays within 12.5 percent") {
  AugmentConfig cfg;
  Rng rng(12);
  for (int i = 0; i < 2000; ++i) {
    const WeakPlan p = draw_weak(cfg.weak, 32, 32, rng);
    CHECK(std::abs(p.shift_x) <= 4);
    CHECK(std::abs(p.shift_y) <= 4);
  }
}

TEST_CASE("op names round-trip and bad configs are rejected") {
  for (StrongOp op : AugmentConfig{}.strong.op_pool) CHECK(strong_op_from_string(to_string(op)) == op);
  CHECK_THROWS_AS(strong_op_from_string("blur"), ConfigError);
  AugmentConfig cfg;
  cfg.strong.n_ops = 7;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
