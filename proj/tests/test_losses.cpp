#include <doctest.h>

#include "ltssl/errors.hpp"
#include "ltssl/gradcheck.hpp"
#include "ltssl/losses.hpp"

#include <cmath>
#include <random>

using namespace ltssl;

namespace {

// Cross-entropy by direct summation, no max subtraction.
double direct_ce(std::span<const double> f, int target) {
  double s = 0.0;
  for (double v : f) s += std::exp(v);
  return -std::log(std::exp(f[static_cast<std::size_t>(target)]) / s);
}

RowMatrix random_logits(int n, int k, std::mt19937_64& rng, double scale = 3.0) {
  std::normal_distribution<double> nd(0.0, scale);
  RowMatrix m(n, k);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

std::span<const double> row_span(const RowMatrix& m, Eigen::Index r) {
  return {m.row(r).data(), static_cast<std::size_t>(m.cols())};
}

}  // namespace

TEST_CASE("supervised cross-entropy") {
  SUBCASE("uniform logits give ln K") {
    const RowMatrix z = RowMatrix::Zero(1, 10);
    const int label = 3;
    CHECK(ce_supervised(z, std::span(&label, 1)).value == doctest::Approx(2.302585).epsilon(1e-6));
  }
  SUBCASE("saturated target") {
    RowMatrix z = RowMatrix::Zero(1, 10);
    z(0, 4) = 50.0;
    const int label = 4;
    CHECK(ce_supervised(z, std::span(&label, 1)).value < 1e-20);
  }
  SUBCASE("random batches match direct evaluation") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
      const RowMatrix z = random_logits(8, 5, rng);
      std::vector<int> labels(8);
      for (int& l : labels) l = static_cast<int>(rng() % 5);
      double expect = 0.0;
      for (int i = 0; i < 8; ++i) expect += direct_ce(row_span(z, i), labels[static_cast<std::size_t>(i)]);
      expect /= 8;
      CHECK(ce_supervised(z, labels).value == doctest::Approx(expect).epsilon(1e-9));
    }
  }
  SUBCASE("gradient matches central differences") {
    std::mt19937_64 rng(2);
    const RowMatrix z = random_logits(4, 6, rng);
    const std::vector<int> labels = {0, 5, 2, 2};
    const LogitLoss l = ce_supervised(z, labels);
    const GroupError e = grad_check_vector(
        [&](std::span<const double> x) {
          return ce_supervised(Eigen::Map<const RowMatrix>(x.data(), 4, 6), labels).value;
        },
        {z.data(), static_cast<std::size_t>(z.size())},
        {l.dlogits.data(), static_cast<std::size_t>(l.dlogits.size())});
    CHECK(e.max_rel_error < 1e-6);
  }
  SUBCASE("bad inputs are data errors") {
    const RowMatrix z = RowMatrix::Zero(1, 3);
    const int bad = 3;
    CHECK_THROWS_AS(ce_supervised(z, std::span(&bad, 1)), DataError);
    CHECK_THROWS_AS(ce_supervised(RowMatrix(0, 3), std::span<const int>()), DataError);
  }
}

TEST_CASE("class prior EMA") {
  SUBCASE("starts uniform") {
    const ClassPriorEMA p(4, 0.99);
    for (double v : p.probabilities()) CHECK(v == doctest::Approx(0.25));
  }
  SUBCASE("decay 0.99 from uniform towards (0.9, 0.1)") {
    ClassPriorEMA p(2, 0.99);
    RowMatrix probs(2, 2);
    probs << 0.8, 0.2, 1.0, 0.0;  // batch mean (0.9, 0.1)
    p.update(probs);
    CHECK(p.probabilities()[0] == doctest::Approx(0.504).epsilon(1e-12));
    CHECK(p.probabilities()[1] == doctest::Approx(0.496).epsilon(1e-12));
  }
  SUBCASE("decay 1 leaves the prior unchanged, decay 0 copies the batch mean") {
    RowMatrix probs(1, 3);
    probs << 0.7, 0.2, 0.1;
    ClassPriorEMA keep(3, 1.0);
    keep.update(probs);
    for (double v : keep.probabilities()) CHECK(v == doctest::Approx(1.0 / 3.0));
    ClassPriorEMA copy(3, 0.0);
    copy.update(probs);
    CHECK(copy.probabilities()[0] == doctest::Approx(0.7));
    CHECK(copy.probabilities()[2] == doctest::Approx(0.1));
  }
  SUBCASE("stays on the open simplex") {
    ClassPriorEMA p(3, 0.0);
    RowMatrix probs(1, 3);
    probs << 1.0, 0.0, 0.0;
    p.update(probs);
    double sum = 0.0;
    for (double v : p.probabilities()) {
      CHECK(v > 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("empty batch is a no-op") {
    ClassPriorEMA p(2, 0.5);
    p.update(RowMatrix(0, 2));
    CHECK(p.probabilities()[0] == 0.5);
  }
}

TEST_CASE("margins") {
  SUBCASE("uniform prior") {
    const MarginVector m = margins(ClassPriorEMA(10, 0.99), 0.5);
    for (double v : m.m) CHECK(v == doctest::Approx(0.5 * std::log(10.0)));
  }
  SUBCASE("lambda 0 gives zeros") {
    ClassPriorEMA p(2, 0.99);
    const std::vector<double> skew = {0.9, 0.1};
    p.assign(skew);
    for (double v : margins(p, 0.0).m) CHECK(v == 0.0);
  }
  SUBCASE("(0.9, 0.1) with lambda 1") {
    ClassPriorEMA p(2, 0.99);
    const std::vector<double> skew = {0.9, 0.1};
    p.assign(skew);
    const MarginVector m = margins(p, 1.0);
    CHECK(m.m[0] == doctest::Approx(0.10536).epsilon(1e-4));
    CHECK(m.m[1] == doctest::Approx(2.30259).epsilon(1e-5));
  }
}

TEST_CASE("adaptive margin loss") {
  const MarginVector skew{{-std::log(0.9), -std::log(0.1)}, 1.0};
  const std::vector<double> ones = {1.0, 1.0};
  SUBCASE("tail target") {
    // Shifted logits differ by ln 9, so the loss is ln(1 + 9).
    CHECK(aml(ones, 1, skew) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    CHECK(aml(ones, 1, skew) == doctest::Approx(2.302585).epsilon(1e-6));
  }
  SUBCASE("head target is penalized less") {
    const double head = aml(ones, 0, skew);
    CHECK(head == doctest::Approx(std::log(10.0 / 9.0)).epsilon(1e-12));
    CHECK(head < aml(ones, 1, skew));
  }
  SUBCASE("equal margins reduce to cross-entropy") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      const RowMatrix z = random_logits(1, 7, rng);
      const int t = static_cast<int>(rng() % 7);
      const MarginVector eq{std::vector<double>(7, 0.8), 1.0};
      CHECK(std::abs(aml(row_span(z, 0), t, eq) - direct_ce(row_span(z, 0), t)) <= 1e-12);
    }
  }
  SUBCASE("matches direct evaluation on shifted logits") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    for (int trial = 0; trial < 100; ++trial) {
      const RowMatrix z = random_logits(1, 5, rng);
      MarginVector m{std::vector<double>(5), 1.0};
      for (double& v : m.m) v = u(rng);
      const int t = static_cast<int>(rng() % 5);
      std::vector<double> shifted(5);
      for (int j = 0; j < 5; ++j) shifted[static_cast<std::size_t>(j)] = z(0, j) - m.m[static_cast<std::size_t>(j)];
      CHECK(aml(row_span(z, 0), t, m) == doctest::Approx(direct_ce(shifted, t)).epsilon(1e-9));
    }
  }
  SUBCASE("gradient matches central differences") {
    std::mt19937_64 rng(5);
    const RowMatrix z = random_logits(1, 6, rng);
    const MarginVector m{{0.1, 0.5, 1.0, 2.0, 0.0, 0.3}, 1.0};
    std::vector<double> g(6);
    aml(row_span(z, 0), 2, m, g);
    const GroupError e = grad_check_vector([&](std::span<const double> x) { return aml(x, 2, m); },
                                           row_span(z, 0), g);
    CHECK(e.max_rel_error < 1e-6);
  }
}

TEST_CASE("unsupervised loss") {
  std::mt19937_64 rng(6);
  const RowMatrix z = random_logits(112, 5, rng);
  std::vector<int> pseudo(112);
  for (int& p : pseudo) p = static_cast<int>(rng() % 5);
  const MarginVector m{{0.1, 0.2, 0.5, 1.0, 1.5}, 0.5};
  SUBCASE("empty mask gives zero") {
    const std::vector<std::uint8_t> mask(112, 0);
    const LogitLoss l = unsup_loss(z, pseudo, mask, m);
    CHECK(l.value == 0.0);
    CHECK(l.dlogits.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("single selected sample is divided by the batch size") {
    std::vector<std::uint8_t> mask(112, 0);
    mask[17] = 1;
    const double v = aml(row_span(z, 17), pseudo[17], m);
    CHECK(unsup_loss(z, pseudo, mask, m).value == doctest::Approx(v / 112.0).epsilon(1e-12));
  }
  SUBCASE("random mask matches per-element summation") {
    std::vector<std::uint8_t> mask(112);
    double expect = 0.0;
    for (int i = 0; i < 112; ++i) {
      mask[static_cast<std::size_t>(i)] = rng() % 3 == 0;
      if (mask[static_cast<std::size_t>(i)]) expect += aml(row_span(z, i), pseudo[static_cast<std::size_t>(i)], m);
    }
    CHECK(unsup_loss(z, pseudo, mask, m).value == doctest::Approx(expect / 112.0).epsilon(1e-12));
  }
}

TEST_CASE("total loss") {
  const LossBreakdown b = total_loss(1.0, 0.5, 0.2, 1.0, 1.5);
  CHECK(b.total == doctest::Approx(1.8).epsilon(1e-12));
  CHECK(total_loss(0.7, 3.0, 9.0, 0.0, 0.0).total == 0.7);
  try {
    total_loss(1.0, std::nan(""), 0.0, 1.0, 1.5);
    FAIL("expected a numeric fault");
  } catch (const NumericFault& e) {
    CHECK(e.where() == "L_u");
  }
}
