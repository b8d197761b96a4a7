#include <doctest.h>

#include "ltssl/errors.hpp"
#include "ltssl/gradcheck.hpp"
#include "ltssl/model.hpp"
#include "ltssl/rng.hpp"

#include <cmath>
#include <random>

using namespace ltssl;

namespace {

ArchConfig tiny_arch(int h = 8, int w = 8, std::vector<int> channels = {2, 3}, int k = 3) {
  ArchConfig a;
  a.image_height = h;
  a.image_width = w;
  a.channels = std::move(channels);
  a.num_classes = k;
  a.precision = Precision::kFloat64;
  return a;
}

ImageBatch random_batch(int n, int h, int w, std::uint64_t seed) {
  ImageBatch b(n, h, w);
  Rng rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& p : b.pixels) p = u(rng);
  return b;
}

// Straight-line reference network: direct 3x3 stride-2 convolution loops.
struct Reference {
  std::vector<std::vector<double>> logits;
  std::vector<std::vector<double>> embedding;
};

Reference naive_forward(const ArchConfig& a, const ModelParams& p, const ImageBatch& b) {
  Reference ref;
  for (int n = 0; n < b.count; ++n) {
    int c_in = 1, h = a.image_height, w = a.image_width;
    // act[c][y][x]
    std::vector<double> act(static_cast<std::size_t>(h * w));
    for (int i = 0; i < h * w; ++i) act[static_cast<std::size_t>(i)] = b.image(n)[static_cast<std::size_t>(i)];
    for (std::size_t l = 0; l < a.channels.size(); ++l) {
      const int c_out = a.channels[l];
      const int oh = (h + 2 - 3) / 2 + 1, ow = (w + 2 - 3) / 2 + 1;
      const auto wt = p.find("conv" + std::to_string(l + 1) + ".weight")->values();
      const auto bs = p.find("conv" + std::to_string(l + 1) + ".bias")->values();
      std::vector<double> out(static_cast<std::size_t>(c_out * oh * ow));
      for (int co = 0; co < c_out; ++co)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            double s = bs[static_cast<std::size_t>(co)];
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx)
                for (int ci = 0; ci < c_in; ++ci) {
                  const int iy = 2 * oy - 1 + ky, ix = 2 * ox - 1 + kx;
                  if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                  const double wv = wt[static_cast<std::size_t>(((co * 3 + ky) * 3 + kx) * c_in + ci)];
                  s += wv * act[static_cast<std::size_t>((ci * h + iy) * w + ix)];
                }
            out[static_cast<std::size_t>((co * oh + oy) * ow + ox)] = std::max(s, 0.0);
          }
      act = std::move(out);
      c_in = c_out;
      h = oh;
      w = ow;
    }
    std::vector<double> emb(static_cast<std::size_t>(c_in), 0.0);
    for (int c = 0; c < c_in; ++c) {
      for (int i = 0; i < h * w; ++i) emb[static_cast<std::size_t>(c)] += act[static_cast<std::size_t>(c * h * w + i)];
      emb[static_cast<std::size_t>(c)] /= h * w;
    }
    const auto hw = p.find("head.weight")->values();
    const auto hb = p.find("head.bias")->values();
    std::vector<double> logits(static_cast<std::size_t>(a.num_classes));
    for (int k = 0; k < a.num_classes; ++k) {
      double s = hb[static_cast<std::size_t>(k)];
      for (int c = 0; c < c_in; ++c) s += hw[static_cast<std::size_t>(k * c_in + c)] * emb[static_cast<std::size_t>(c)];
      logits[static_cast<std::size_t>(k)] = s;
    }
    ref.logits.push_back(logits);
    ref.embedding.push_back(emb);
  }
  return ref;
}

void randomize_biases(ModelParams& p, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> nd(0.0, 0.1);
  for (auto& t : p)
    if (t.shape().size() == 1)
      for (double& v : t.values()) v = nd(rng);
}

}  // namespace

TEST_CASE("forward matches a straight-line convolution") {
  for (auto [h, w] : {std::pair{8, 8}, std::pair{7, 9}, std::pair{5, 4}}) {
    const ArchConfig a = tiny_arch(h, w, {2, 3, 4}, 3);
    const SmallConvNet net(a);
    ModelParams p = net.init_params(11);
    randomize_biases(p, 12);
    const ImageBatch b = random_batch(4, h, w, 13);
    const ForwardOutput out = net.forward(p, b);
    const Reference ref = naive_forward(a, p, b);
    for (int n = 0; n < b.count; ++n) {
      for (int k = 0; k < a.num_classes; ++k)
        CHECK(out.logits(n, k) == doctest::Approx(ref.logits[n][k]).epsilon(1e-12));
      for (int c = 0; c < a.embedding_dim(); ++c)
        CHECK(out.embedding(n, c) == doctest::Approx(ref.embedding[n][c]).epsilon(1e-12));
    }
  }
}

TEST_CASE("float32 forward agrees with float64") {
  ArchConfig a = tiny_arch();
  const ModelParams p = SmallConvNet(a).init_params(3);
  const ImageBatch b = random_batch(3, 8, 8, 4);
  const ForwardOutput f64 = SmallConvNet(a).forward(p, b);
  a.precision = Precision::kFloat32;
  const ForwardOutput f32 = SmallConvNet(a).forward(p, b);
  CHECK((f64.logits - f32.logits).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("head gradients are embedding sums") {
  const ArchConfig a = tiny_arch();
  const SmallConvNet net(a);
  const ModelParams p = net.init_params(5);
  const ImageBatch b = random_batch(3, 8, 8, 6);
  ForwardCache cache;
  const ForwardOutput out = net.forward(p, b, cache);
  // d loss / d logits = all ones for class 1 only.
  RowMatrix dl = RowMatrix::Zero(3, a.num_classes);
  dl.col(1).setOnes();
  const ModelParams g = net.backward(p, cache, dl, {});
  const auto gw = g.find("head.weight")->values();
  const int d = a.embedding_dim();
  for (int c = 0; c < d; ++c) {
    CHECK(gw[static_cast<std::size_t>(1 * d + c)] == doctest::Approx(out.embedding.col(c).sum()));
    CHECK(gw[static_cast<std::size_t>(0 * d + c)] == 0.0);
  }
  CHECK(g.find("head.bias")->values()[1] == doctest::Approx(3.0));
}

TEST_CASE("backward matches central differences") {
  const ArchConfig a = tiny_arch(8, 8, {3, 4}, 3);
  const SmallConvNet net(a);
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    ModelParams p = net.init_params(100 + trial);
    randomize_biases(p, 200 + trial);
    const ImageBatch b = random_batch(2, 8, 8, 300 + trial);
    Rng rng(400 + trial);
    std::normal_distribution<double> nd;
    RowMatrix cl(2, a.num_classes), ce(2, a.embedding_dim());
    for (Eigen::Index i = 0; i < cl.size(); ++i) cl.data()[i] = nd(rng);
    for (Eigen::Index i = 0; i < ce.size(); ++i) ce.data()[i] = nd(rng);
    // Linear functional of the outputs: sum(cl .* logits) + sum(ce .* embedding).
    LossEvaluator loss;
    loss.value = [&](const ModelParams& q) {
      const ForwardOutput o = net.forward(q, b);
      return (cl.array() * o.logits.array()).sum() + (ce.array() * o.embedding.array()).sum();
    };
    loss.gradient = [&](const ModelParams& q) {
      ForwardCache c;
      net.forward(q, b, c);
      return net.backward(q, c, cl, ce);
    };
    loss.region = [&](const ModelParams& q) {
      ForwardCache c;
      net.forward(q, b, c);
      return c.relu_pattern();
    };
    const GradCheckReport r = grad_check(loss, p, 1e-4);
    CHECK(r.checked() > 50);
    CHECK(r.passed());
  }
}

TEST_CASE("shape mismatches are config errors") {
  const SmallConvNet net(tiny_arch());
  const ModelParams p = net.init_params(1);
  CHECK_THROWS_AS(net.forward(p, random_batch(1, 9, 8, 1)), ConfigError);
  const ModelParams other = SmallConvNet(tiny_arch(8, 8, {2, 5}, 3)).init_params(1);
  CHECK_THROWS_AS(net.forward(other, random_batch(1, 8, 8, 1)), ConfigError);
}

TEST_CASE("non-finite activations name the layer") {
  const SmallConvNet net(tiny_arch());
  ModelParams p = net.init_params(1);
  p.find("conv1.bias")->values()[0] = std::numeric_limits<double>::infinity();
  try {
    net.forward(p, random_batch(1, 8, 8, 1));
    FAIL("expected a numeric fault");
  } catch (const NumericFault& e) {
    CHECK(e.where() == "conv1");
  }
}

TEST_CASE("EMA blends and rejects layout mismatch") {
  const SmallConvNet net(tiny_arch());
  ModelParams p = net.init_params(1);
  EmaParams ema{p.zeros_like(), 0.75};
  ema_update(ema, p);
  for (std::size_t g = 0; g < p.group_count(); ++g)
    for (std::size_t i = 0; i < p.group(g).size(); ++i)
      CHECK(ema.shadow.group(g).values()[i] == doctest::Approx(0.25 * p.group(g).values()[i]));
  EmaParams bad{SmallConvNet(tiny_arch(8, 8, {2, 5}, 3)).zero_params(), 0.9};
  CHECK_THROWS_AS(ema_update(bad, p), ConfigError);
}

TEST_CASE("init is deterministic per seed") {
  const SmallConvNet net(tiny_arch());
  CHECK(net.init_params(7).checksum() == net.init_params(7).checksum());
  CHECK(net.init_params(7).checksum() != net.init_params(8).checksum());
}
