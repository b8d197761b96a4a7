#include "ltssl/config.hpp"

#include "ltssl/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace ltssl {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string precision_name(Precision p) { return p == Precision::kFloat32 ? "f32" : "f64"; }
std::string schedule_name(Schedule s) { return s == Schedule::kCosine ? "cosine" : "constant"; }
std::string mode_name(GateMode m) { return m == GateMode::kEnergy ? "energy" : "confidence"; }

template <typename T>
T as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + v.dump());
  }
}

}  // namespace

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(num_classes >= 2, "num_classes must be >= 2");
  require(image_size >= 4, "image_size must be >= 4");
  require(label_fraction > 0.0 && label_fraction <= 1.0, "label_fraction must lie in (0,1]");
  require(!channels.empty(), "arch.channels must not be empty");
  for (int c : channels) require(c >= 1, "arch.channels entries must be >= 1");
  require(lr >= 0.0 && std::isfinite(lr), "lr must be >= 0");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0,1)");
  require(weight_decay >= 0.0, "weight_decay must be >= 0");
  require(grad_clip >= 0.0, "grad_clip must be >= 0");
  require(iterations >= 0, "iterations must be >= 0");
  require(batch_labeled >= 1, "batch_labeled must be >= 1");
  require(unlabeled_ratio >= 0, "unlabeled_ratio must be >= 0");
  require(ema_decay > 0.0 && ema_decay <= 1.0, "ema_decay must lie in (0,1]");
  selection.validate();
  require(lambda_margin >= 0.0, "lambda_margin must be >= 0");
  require(prior_decay >= 0.0 && prior_decay <= 1.0, "prior_decay must lie in [0,1]");
  require(triplet_margin > 0.0, "triplet_margin must be > 0");
  require(triplet_margin <= 0.5,
          "triplet_margin above 0.5 is rejected: training is known not to converge there");
  require(lambda_u >= 0.0, "lambda_u must be >= 0");
  require(lambda_ahtl >= 0.0, "lambda_ahtl must be >= 0");
  require(eval_interval >= 1, "eval_interval must be >= 1");
  augment.validate();
}

ArchConfig TrainConfig::arch() const {
  ArchConfig a;
  a.image_height = image_size;
  a.image_width = image_size;
  a.channels = channels;
  a.num_classes = num_classes;
  a.precision = precision;
  return a;
}

ordered_json TrainConfig::to_json() const {
  ordered_json j;
  j["num_classes"] = num_classes;
  j["image_size"] = image_size;
  j["label_fraction"] = label_fraction;
  j["arch.channels"] = channels;
  j["arch.precision"] = precision_name(precision);
  j["normalize_embeddings"] = normalize_embeddings;
  j["lr"] = lr;
  j["momentum"] = momentum;
  j["weight_decay"] = weight_decay;
  j["grad_clip"] = grad_clip;
  j["schedule"] = schedule_name(schedule);
  j["iterations"] = iterations;
  j["batch_labeled"] = batch_labeled;
  j["unlabeled_ratio"] = unlabeled_ratio;
  j["ema_decay"] = ema_decay;
  j["selection.mode"] = mode_name(selection.mode);
  j["tau_e"] = selection.tau_e;
  j["temperature"] = selection.temperature;
  j["tau_c"] = selection.tau_c;
  j["lambda_margin"] = lambda_margin;
  j["prior_decay"] = prior_decay;
  j["triplet_margin"] = triplet_margin;
  j["lambda_u"] = lambda_u;
  j["lambda_ahtl"] = lambda_ahtl;
  j["weak.flip_prob"] = augment.weak.flip_prob;
  j["weak.max_shift"] = augment.weak.max_shift;
  j["strong.n_ops"] = augment.strong.n_ops;
  std::vector<std::string> pool;
  for (StrongOp op : augment.strong.op_pool) pool.push_back(to_string(op));
  j["strong.op_pool"] = pool;
  j["strong.max_rotation_deg"] = augment.strong.max_rotation_deg;
  j["strong.max_shear"] = augment.strong.max_shear;
  j["strong.contrast_min"] = augment.strong.contrast_min;
  j["strong.contrast_max"] = augment.strong.contrast_max;
  j["strong.gamma_min"] = augment.strong.gamma_min;
  j["strong.gamma_max"] = augment.strong.gamma_max;
  j["strong.max_speckle_sigma"] = augment.strong.max_speckle_sigma;
  j["strong.cutout_fraction"] = augment.strong.cutout_fraction;
  j["seed"] = seed;
  j["eval_interval"] = eval_interval;
  return j;
}

void TrainConfig::set(const std::string& key, const json& v) {
  if (key == "num_classes") num_classes = as<int>(v, key);
  else if (key == "image_size") image_size = as<int>(v, key);
  else if (key == "label_fraction") label_fraction = as<double>(v, key);
  else if (key == "arch.channels") channels = as<std::vector<int>>(v, key);
  else if (key == "arch.precision") {
    const auto s = as<std::string>(v, key);
    if (s == "f32") precision = Precision::kFloat32;
    else if (s == "f64") precision = Precision::kFloat64;
    else throw ConfigError("arch.precision must be f32 or f64");
  } else if (key == "normalize_embeddings") normalize_embeddings = as<bool>(v, key);
  else if (key == "lr") lr = as<double>(v, key);
  else if (key == "momentum") momentum = as<double>(v, key);
  else if (key == "weight_decay") weight_decay = as<double>(v, key);
  else if (key == "grad_clip") grad_clip = as<double>(v, key);
  else if (key == "schedule") {
    const auto s = as<std::string>(v, key);
    if (s == "cosine") schedule = Schedule::kCosine;
    else if (s == "constant") schedule = Schedule::kConstant;
    else throw ConfigError("schedule must be cosine or constant");
  } else if (key == "iterations") iterations = as<std::int64_t>(v, key);
  else if (key == "batch_labeled") batch_labeled = as<int>(v, key);
  else if (key == "unlabeled_ratio") unlabeled_ratio = as<int>(v, key);
  else if (key == "ema_decay") ema_decay = as<double>(v, key);
  else if (key == "selection.mode") {
    const auto s = as<std::string>(v, key);
    if (s == "energy") selection.mode = GateMode::kEnergy;
    else if (s == "confidence") selection.mode = GateMode::kConfidence;
    else throw ConfigError("selection.mode must be energy or confidence");
  } else if (key == "tau_e") selection.tau_e = as<double>(v, key);
  else if (key == "temperature") selection.temperature = as<double>(v, key);
  else if (key == "tau_c") selection.tau_c = as<double>(v, key);
  else if (key == "lambda_margin") lambda_margin = as<double>(v, key);
  else if (key == "prior_decay") prior_decay = as<double>(v, key);
  else if (key == "triplet_margin") triplet_margin = as<double>(v, key);
  else if (key == "lambda_u") lambda_u = as<double>(v, key);
  else if (key == "lambda_ahtl") lambda_ahtl = as<double>(v, key);
  else if (key == "weak.flip_prob") augment.weak.flip_prob = as<double>(v, key);
  else if (key == "weak.max_shift") augment.weak.max_shift = as<double>(v, key);
  else if (key == "strong.n_ops") augment.strong.n_ops = as<int>(v, key);
  else if (key == "strong.op_pool") {
    augment.strong.op_pool.clear();
    for (const auto& name : as<std::vector<std::string>>(v, key))
      augment.strong.op_pool.push_back(strong_op_from_string(name));
  } else if (key == "strong.max_rotation_deg") augment.strong.max_rotation_deg = as<double>(v, key);
  else if (key == "strong.max_shear") augment.strong.max_shear = as<double>(v, key);
  else if (key == "strong.contrast_min") augment.strong.contrast_min = as<double>(v, key);
  else if (key == "strong.contrast_max") augment.strong.contrast_max = as<double>(v, key);
  else if (key == "strong.gamma_min") augment.strong.gamma_min = as<double>(v, key);
  else if (key == "strong.gamma_max") augment.strong.gamma_max = as<double>(v, key);
  else if (key == "strong.max_speckle_sigma") augment.strong.max_speckle_sigma = as<double>(v, key);
  else if (key == "strong.cutout_fraction") augment.strong.cutout_fraction = as<double>(v, key);
  else if (key == "seed") seed = as<std::uint64_t>(v, key);
  else if (key == "eval_interval") eval_interval = as<std::int64_t>(v, key);
  else throw ConfigError("unknown config key '" + key + "'");
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  json parsed = json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value;
  set(key, parsed);
}

TrainConfig TrainConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config document must be a JSON object");
  TrainConfig cfg;
  for (auto it = j.begin(); it != j.end(); ++it) cfg.set(it.key(), it.value());
  return cfg;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path.string() + "'");
  json j = json::parse(is, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config '" + path.string() + "' is not valid JSON");
  return from_json(j);
}

void TrainConfig::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write config '" + path.string() + "'");
  os << to_json().dump(2) << "\n";
}

std::string TrainConfig::fingerprint() const {
  const std::string canonical = to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TrainConfig default_config(int num_classes) {
  TrainConfig cfg;
  cfg.num_classes = num_classes;
  if (num_classes == 5) {
    cfg.selection.tau_e = -9.0;
    cfg.selection.temperature = 0.5;
  } else {
    cfg.selection.tau_e = -9.5;
    cfg.selection.temperature = 1.0;
  }
  return cfg;
}

TrainConfig baseline_config(TrainConfig base, double tau_c) {
  base.selection.mode = GateMode::kConfidence;
  base.selection.tau_c = tau_c;
  base.lambda_margin = 0.0;
  base.lambda_ahtl = 0.0;
  return base;
}

}  // namespace ltssl
