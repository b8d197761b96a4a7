#include "ltssl/dataset.hpp"

#include "ltssl/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <unordered_set>

namespace ltssl {

std::optional<int> HiddenLabels::lookup(std::uint32_t id) const {
  auto it = labels_.find(id);
  if (it == labels_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> HiddenLabels::class_counts(int num_classes) const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (const auto& [id, label] : labels_)
    if (label >= 0 && label < num_classes) ++counts[static_cast<std::size_t>(label)];
  return counts;
}

std::vector<int> longtail_counts(const LongTailSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("long-tail spec needs K >= 2");
  if (!(spec.imbalance_ratio >= 1.0) || !std::isfinite(spec.imbalance_ratio))
    throw ConfigError("long-tail spec needs IR >= 1");
  if (spec.head_count < 1) throw ConfigError("long-tail spec needs N >= 1");

  const int k_total = spec.num_classes;
  const double n = spec.head_count;
  std::vector<int> counts(static_cast<std::size_t>(k_total));
  for (int k = 0; k < k_total; ++k) {
    double value;
    if (k == 0)
      value = n;
    else if (k == k_total - 1)
      value = n / spec.imbalance_ratio;
    else
      value = n * std::pow(spec.imbalance_ratio, -static_cast<double>(k) / (k_total - 1));
    counts[static_cast<std::size_t>(k)] = std::max(1, static_cast<int>(std::lround(value)));
  }
  return counts;
}

// ---------------------------------------------------------------------------
// Synthetic generator

namespace {

struct ClassTemplate {
  double tilt;        // orientation magnitude in radians; sign drawn per sample
  double length;      // gaussian sigma along the major axis, as image fraction
  double breadth;     // sigma across the axis, as image fraction
  double scatterer;   // position of a bright point along the axis, in [-1,1]
  double brightness;  // peak target amplitude before speckle
};

// Class identity survives horizontal flips: a flip negates the tilt, and the
// tilt sign is already random.
ClassTemplate class_template(int k, int num_classes) {
  const double frac = num_classes > 1 ? static_cast<double>(k) / (num_classes - 1) : 0.0;
  static constexpr std::array<double, 5> kScatter = {0.7, -0.5, 0.0, 0.45, -0.8};
  static constexpr std::array<double, 4> kBreadth = {0.06, 0.09, 0.075, 0.105};
  ClassTemplate t;
  t.tilt = frac * std::numbers::pi / 2.0;
  t.length = 0.20 + 0.04 * ((k * 3) % 4) / 3.0;
  t.breadth = kBreadth[static_cast<std::size_t>(k) % kBreadth.size()];
  t.scatterer = kScatter[static_cast<std::size_t>(k) % kScatter.size()];
  t.brightness = 0.55 + 0.05 * (k % 3);
  return t;
}

constexpr double kTiltJitter = 0.16;    // radians (about 9 degrees)
constexpr double kExtentJitter = 0.15;  // relative
constexpr double kCenterJitter = 0.06;  // image fraction
constexpr double kClutter = 0.12;

void render(const ClassTemplate& t, const SynthConfig& cfg, Rng& rng, std::vector<float>& out) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const double h = cfg.height, w = cfg.width;
  const double size = std::min(h, w);
  const double sign = coin(rng) ? 1.0 : -1.0;
  const double j = cfg.jitter;
  const double angle = sign * t.tilt + j * kTiltJitter * unit(rng);
  const double len = t.length * size * (1.0 + j * kExtentJitter * unit(rng));
  const double wid = t.breadth * size * (1.0 + j * kExtentJitter * unit(rng));
  const double cx = (w - 1) / 2.0 + kCenterJitter * size * unit(rng);
  const double cy = (h - 1) / 2.0 + kCenterJitter * size * unit(rng);
  const double amp = t.brightness * (1.0 + 0.1 * j * unit(rng));
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double pos = t.scatterer + 0.25 * j * unit(rng);
  const double sx = cx + pos * 1.3 * len * ca;
  const double sy = cy + pos * 1.3 * len * sa;
  const double scatter_sigma = 0.045 * size;

  std::gamma_distribution<double> speckle(cfg.speckle_looks, 1.0 / cfg.speckle_looks);
  out.resize(static_cast<std::size_t>(cfg.height) * cfg.width);
  for (int y = 0; y < cfg.height; ++y) {
    for (int x = 0; x < cfg.width; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double along = dx * ca + dy * sa;
      const double across = -dx * sa + dy * ca;
      double v = kClutter +
                 amp * std::exp(-0.5 * (along * along / (len * len) + across * across / (wid * wid)));
      const double px = x - sx, py = y - sy;
      v += 0.45 * std::exp(-0.5 * (px * px + py * py) / (scatter_sigma * scatter_sigma));
      v *= speckle(rng);
      out[static_cast<std::size_t>(y) * cfg.width + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
}

}  // namespace

std::vector<ImageSample> synth_generate(const SynthConfig& cfg, std::span<const int> counts,
                                        std::uint64_t seed, std::uint32_t first_id,
                                        StreamTag tag) {
  if (static_cast<int>(counts.size()) != cfg.num_classes)
    throw ConfigError("counts length must equal the class count");
  if (cfg.height < 4 || cfg.width < 4) throw ConfigError("synthetic images must be at least 4x4");
  if (!(cfg.speckle_looks > 0.0)) throw ConfigError("speckle looks must be > 0");
  if (!(cfg.jitter >= 0.0)) throw ConfigError("synthetic jitter must be >= 0");
  std::vector<ImageSample> pool;
  std::uint32_t next_id = first_id;
  for (int k = 0; k < cfg.num_classes; ++k) {
    const ClassTemplate t = class_template(k, cfg.num_classes);
    for (int i = 0; i < counts[static_cast<std::size_t>(k)]; ++i) {
      ImageSample s;
      s.id = next_id++;
      s.height = cfg.height;
      s.width = cfg.width;
      s.label = k;
      Rng rng = make_stream(seed, tag, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i));
      render(t, cfg, rng, s.pixels);
      pool.push_back(std::move(s));
    }
  }
  return pool;
}

std::vector<ImageSample> subsample_per_class(std::span<const ImageSample> pool,
                                             std::span<const int> counts, std::uint64_t seed) {
  const int k_total = static_cast<int>(counts.size());
  std::vector<std::vector<std::size_t>> by_class(counts.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& s = pool[i];
    if (!s.label || *s.label < 0 || *s.label >= k_total)
      throw DataError("long-tail construction needs every sample labeled within [0,K)");
    by_class[static_cast<std::size_t>(*s.label)].push_back(i);
  }
  std::vector<ImageSample> out;
  for (int k = 0; k < k_total; ++k) {
    auto& idx = by_class[static_cast<std::size_t>(k)];
    const auto want = static_cast<std::size_t>(counts[static_cast<std::size_t>(k)]);
    if (idx.size() < want)
      throw DataError("class " + std::to_string(k) + " has " + std::to_string(idx.size()) +
                      " samples, long-tail profile needs " + std::to_string(want));
    Rng rng = make_stream(seed, StreamTag::kSubsample, static_cast<std::uint64_t>(k));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(want);
    std::sort(idx.begin(), idx.end());
    for (std::size_t i : idx) out.push_back(pool[i]);
  }
  return out;
}

std::vector<std::size_t> DatasetSplit::labeled_class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (const auto& s : labeled)
    if (s.label) ++counts[static_cast<std::size_t>(*s.label)];
  return counts;
}

DatasetSplit make_splits(std::span<const ImageSample> pool, std::vector<ImageSample> test,
                         int num_classes, double label_fraction, std::uint64_t seed) {
  if (!(label_fraction > 0.0 && label_fraction <= 1.0))
    throw ConfigError("label fraction must lie in (0,1]");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");

  DatasetSplit split;
  split.num_classes = num_classes;
  if (!pool.empty()) {
    split.height = pool.front().height;
    split.width = pool.front().width;
  } else if (!test.empty()) {
    split.height = test.front().height;
    split.width = test.front().width;
  }

  std::unordered_set<std::uint32_t> seen;
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
  std::vector<std::size_t> unknown;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& s = pool[i];
    if (s.height != split.height || s.width != split.width)
      throw DataError("pool images have inconsistent sizes");
    if (!seen.insert(s.id).second) throw DataError("duplicate sample id " + std::to_string(s.id));
    if (!s.label) {
      unknown.push_back(i);
      continue;
    }
    if (*s.label < 0 || *s.label >= num_classes)
      throw DataError("label " + std::to_string(*s.label) + " outside [0,K)");
    by_class[static_cast<std::size_t>(*s.label)].push_back(i);
  }
  for (const auto& s : test)
    if (seen.count(s.id)) throw DataError("test id " + std::to_string(s.id) + " overlaps the pool");

  std::vector<std::size_t> labeled_idx, unlabeled_idx = unknown;
  for (int k = 0; k < num_classes; ++k) {
    auto& idx = by_class[static_cast<std::size_t>(k)];
    Rng rng = make_stream(seed, StreamTag::kSplit, static_cast<std::uint64_t>(k));
    std::shuffle(idx.begin(), idx.end(), rng);
    // The epsilon keeps exact products such as 0.2 * 10 from rounding up.
    const auto take = static_cast<std::size_t>(
        std::ceil(label_fraction * static_cast<double>(idx.size()) - 1e-9));
    for (std::size_t j = 0; j < idx.size(); ++j)
      (j < take ? labeled_idx : unlabeled_idx).push_back(idx[j]);
  }

  Rng order = make_stream(seed, StreamTag::kSplit, 0xffffu);
  std::shuffle(labeled_idx.begin(), labeled_idx.end(), order);
  std::shuffle(unlabeled_idx.begin(), unlabeled_idx.end(), order);

  for (std::size_t i : labeled_idx) split.labeled.push_back(pool[i]);
  for (std::size_t i : unlabeled_idx) {
    const auto& s = pool[i];
    split.unlabeled.push_back(UnlabeledSample{s.id, s.height, s.width, s.pixels});
    if (s.label) split.hidden.set(s.id, *s.label);
  }
  split.test = std::move(test);
  return split;
}

BatchDraw sample_batches(const DatasetSplit& split, const BatchPlan& plan, std::uint64_t seed,
                         std::int64_t iteration) {
  if (split.labeled.empty()) throw DataError("labeled split is empty");
  if (plan.labeled_batch < 1 || plan.unlabeled_ratio < 0)
    throw ConfigError("batch plan needs B >= 1 and mu >= 0");
  Rng rng = make_stream(seed, StreamTag::kBatch, static_cast<std::uint64_t>(iteration));
  BatchDraw draw;
  std::uniform_int_distribution<std::size_t> pick_l(0, split.labeled.size() - 1);
  for (int i = 0; i < plan.labeled_batch; ++i) draw.labeled.push_back(pick_l(rng));
  if (!split.unlabeled.empty()) {
    std::uniform_int_distribution<std::size_t> pick_u(0, split.unlabeled.size() - 1);
    for (int i = 0; i < plan.unlabeled_batch(); ++i) draw.unlabeled.push_back(pick_u(rng));
  }
  return draw;
}

ImageBatch stack(std::span<const ImageSample* const> samples) {
  if (samples.empty()) return ImageBatch(0, 0, 0);
  ImageBatch batch(static_cast<int>(samples.size()), samples.front()->height, samples.front()->width);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i]->pixels.size() != batch.image_size()) throw DataError("inconsistent image sizes in batch");
    std::copy(samples[i]->pixels.begin(), samples[i]->pixels.end(), batch.image(static_cast<int>(i)).begin());
  }
  return batch;
}

ImageBatch stack(std::span<const ImageSample> samples) {
  std::vector<const ImageSample*> ptrs;
  ptrs.reserve(samples.size());
  for (const auto& s : samples) ptrs.push_back(&s);
  return stack(std::span<const ImageSample* const>(ptrs));
}

// ---------------------------------------------------------------------------
// File format: "LTDS", version byte, then K, count, H, W as little-endian
// u32, then per sample id (u32), label (i32, -1 hidden), H*W float32 LE.

namespace {

constexpr char kMagic[4] = {'L', 'T', 'D', 'S'};
constexpr std::uint8_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("dataset file truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& os, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(os, bits);
}

float get_f32(std::istream& is) {
  const std::uint32_t bits = get_u32(is);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const DatasetFile& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
  os.write(kMagic, 4);
  os.put(static_cast<char>(kVersion));
  put_u32(os, static_cast<std::uint32_t>(data.num_classes));
  put_u32(os, static_cast<std::uint32_t>(data.samples.size()));
  put_u32(os, static_cast<std::uint32_t>(data.height));
  put_u32(os, static_cast<std::uint32_t>(data.width));
  const std::size_t hw = static_cast<std::size_t>(data.height) * data.width;
  for (const auto& s : data.samples) {
    if (s.pixels.size() != hw) throw DataError("sample " + std::to_string(s.id) + " has wrong size");
    put_u32(os, s.id);
    put_u32(os, static_cast<std::uint32_t>(s.label ? *s.label : -1));
    for (float p : s.pixels) put_f32(os, p);
  }
  if (!os) throw DataError("write to '" + path.string() + "' failed");
}

DatasetFile read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open dataset '" + path.string() + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("'" + path.string() + "' is not a dataset file");
  const int version = is.get();
  if (version != kVersion) throw DataError("unsupported dataset version " + std::to_string(version));

  DatasetFile data;
  data.num_classes = static_cast<int>(get_u32(is));
  const std::uint32_t count = get_u32(is);
  data.height = static_cast<int>(get_u32(is));
  data.width = static_cast<int>(get_u32(is));
  if (data.num_classes < 2) throw DataError("dataset declares fewer than 2 classes");
  if (data.height < 1 || data.width < 1) throw DataError("dataset declares empty images");

  const std::size_t hw = static_cast<std::size_t>(data.height) * data.width;
  std::unordered_set<std::uint32_t> ids;
  data.samples.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    ImageSample s;
    s.id = get_u32(is);
    const auto label = static_cast<std::int32_t>(get_u32(is));
    if (label < -1 || label >= data.num_classes)
      throw DataError("sample " + std::to_string(s.id) + " has label outside [-1,K)");
    if (label >= 0) s.label = label;
    if (!ids.insert(s.id).second) throw DataError("duplicate sample id " + std::to_string(s.id));
    s.height = data.height;
    s.width = data.width;
    s.pixels.resize(hw);
    for (float& p : s.pixels) {
      p = get_f32(is);
      if (!std::isfinite(p) || p < 0.0f || p > 1.0f)
        throw DataError("sample " + std::to_string(s.id) + " has a pixel outside [0,1]");
    }
    data.samples.push_back(std::move(s));
  }
  return data;
}

}  // namespace ltssl
