#include <doctest.h>

#include "ltssl/checkpoint.hpp"
#include "ltssl/config.hpp"
#include "ltssl/errors.hpp"

#include <filesystem>

using namespace ltssl;

TEST_CASE("config JSON round trip") {
  TrainConfig a = default_config(5);
  a.lr = 0.01;
  a.channels = {4, 8};
  a.selection.mode = GateMode::kConfidence;
  a.augment.strong.op_pool = {StrongOp::kRotate, StrongOp::kGamma};
  a.augment.strong.n_ops = 1;
  const TrainConfig b = TrainConfig::from_json(a.to_json());
  CHECK(b.to_json().dump() == a.to_json().dump());
  CHECK(b.fingerprint() == a.fingerprint());
  CHECK(b.fingerprint().size() == 16);
}

TEST_CASE("class-count defaults") {
  const TrainConfig ten = default_config(10);
  CHECK(ten.selection.tau_e == -9.5);
  CHECK(ten.selection.temperature == 1.0);
  const TrainConfig five = default_config(5);
  CHECK(five.selection.tau_e == -9.0);
  CHECK(five.selection.temperature == 0.5);
  CHECK(five.num_classes == 5);
  CHECK(ten.lambda_margin == 0.5);
  CHECK(ten.lambda_ahtl == 1.5);
  CHECK(ten.triplet_margin == 0.3);
  CHECK(ten.batch_labeled * ten.unlabeled_ratio == 112);
  const TrainConfig base = baseline_config(five);
  CHECK(base.selection.mode == GateMode::kConfidence);
  CHECK(base.selection.tau_c == 0.95);
  CHECK(base.lambda_margin == 0.0);
  CHECK(base.lambda_ahtl == 0.0);
}

TEST_CASE("overrides and validation") {
  TrainConfig c = default_config(10);
  const std::string before = c.fingerprint();
  c.set("tau_e", std::string("-8.5"));
  CHECK(c.selection.tau_e == -8.5);
  CHECK(c.fingerprint() != before);
  c.set("selection.mode", std::string("confidence"));
  CHECK(c.selection.mode == GateMode::kConfidence);
  CHECK_THROWS_AS(c.set("no_such_key", std::string("1")), ConfigError);
  CHECK_THROWS_AS(c.set("lr", std::string("fast")), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json({{"bogus", 1}}), ConfigError);

  TrainConfig m = default_config(10);
  m.triplet_margin = 0.6;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m.triplet_margin = 0.5;
  CHECK_NOTHROW(m.validate());
  m.triplet_margin = 0.0;
  CHECK_THROWS_AS(m.validate(), ConfigError);

  TrainConfig t = default_config(10);
  t.selection.temperature = 0.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("config file round trip") {
  const auto path = std::filesystem::temp_directory_path() / "ltssl_test_config.json";
  TrainConfig a = default_config(5);
  a.seed = 77;
  a.save(path);
  CHECK(TrainConfig::load(path).fingerprint() == a.fingerprint());
  std::filesystem::remove(path);
  CHECK_THROWS_AS(TrainConfig::load(path), ConfigError);
}

TEST_CASE("checkpoint round trip") {
  ArchConfig arch;
  arch.image_height = arch.image_width = 8;
  arch.channels = {2, 3};
  arch.num_classes = 3;
  const SmallConvNet net(arch);
  const ModelParams p = net.init_params(4);

  Checkpoint c;
  c.fingerprint = "0123456789abcdef";
  c.iteration = 42;
  c.put("params", p);
  c.put("prior", {3}, {0.5f, 0.25f, 0.25f});
  const auto dir = std::filesystem::temp_directory_path() / "ltssl_test_ckpt";
  std::filesystem::create_directories(dir);
  write_checkpoint(dir / "a.ckpt", c);
  const Checkpoint r = read_checkpoint(dir / "a.ckpt");
  CHECK(r.fingerprint == c.fingerprint);
  CHECK(r.iteration == 42);
  REQUIRE(r.find("prior") != nullptr);
  CHECK(r.find("prior")->values == std::vector<float>{0.5f, 0.25f, 0.25f});

  ModelParams q = net.zero_params();
  r.get("params", q);
  for (std::size_t g = 0; g < p.group_count(); ++g) {
    const auto a = p.group(g).values();
    const auto b = q.group(g).values();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == static_cast<double>(static_cast<float>(a[i])));
  }
  ModelParams wrong = SmallConvNet([&] {
                        ArchConfig w = arch;
                        w.channels = {2, 4};
                        return w;
                      }())
                          .zero_params();
  CHECK_THROWS_AS(r.get("params", wrong), ConfigError);
  CHECK_THROWS_AS(r.get("ema", q), ConfigError);

  std::filesystem::resize_file(dir / "a.ckpt", 20);
  CHECK_THROWS_AS(read_checkpoint(dir / "a.ckpt"), DataError);
  CHECK_THROWS_AS(read_checkpoint(dir / "none.ckpt"), DataError);
  std::filesystem::remove_all(dir);
}
