#include "ltssl/model.hpp"

#include "ltssl/errors.hpp"
#include "ltssl/rng.hpp"

#include <cmath>
#include <cstring>
#include <variant>

namespace ltssl {

// ---------------------------------------------------------------------------
// Parameter containers

ParamTensor::ParamTensor(std::string name, std::vector<int> shape)
    : name_(std::move(name)), shape_(std::move(shape)) {
  std::size_t n = 1;
  for (int d : shape_) {
    if (d <= 0) throw ConfigError("parameter '" + name_ + "' has non-positive dimension");
    n *= static_cast<std::size_t>(d);
  }
  values_.assign(n, 0.0);
}

ParamTensor& ModelParams::add(std::string name, std::vector<int> shape) {
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name '" + name + "'");
  tensors_.emplace_back(std::move(name), std::move(shape));
  return tensors_.back();
}

const ParamTensor* ModelParams::find(std::string_view name) const {
  for (const auto& t : tensors_)
    if (t.name() == name) return &t;
  return nullptr;
}

ParamTensor* ModelParams::find(std::string_view name) {
  for (auto& t : tensors_)
    if (t.name() == name) return &t;
  return nullptr;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

bool ModelParams::same_layout(const ModelParams& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name() != other.tensors_[i].name() ||
        tensors_[i].shape() != other.tensors_[i].shape())
      return false;
  }
  return true;
}

bool ModelParams::all_finite() const {
  for (const auto& t : tensors_)
    for (double v : t.values())
      if (!std::isfinite(v)) return false;
  return true;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams out;
  for (const auto& t : tensors_) out.add(t.name(), t.shape());
  return out;
}

void ModelParams::axpy(double alpha, const ModelParams& x) {
  if (!same_layout(x)) throw ConfigError("parameter layout mismatch in axpy");
  for (std::size_t g = 0; g < tensors_.size(); ++g) {
    auto dst = tensors_[g].values();
    auto src = x.tensors_[g].values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += alpha * src[i];
  }
}

void ModelParams::scale(double alpha) {
  for (auto& t : tensors_)
    for (double& v : t.values()) v *= alpha;
}

std::uint64_t ModelParams::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tensors_) {
    for (double v : t.values()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

void ema_update(EmaParams& ema, const ModelParams& params) {
  if (!ema.shadow.same_layout(params)) throw ConfigError("EMA shadow layout does not match params");
  if (!(ema.decay >= 0.0 && ema.decay <= 1.0)) throw ConfigError("EMA decay must lie in [0,1]");
  const double keep = ema.decay;
  const double blend = 1.0 - ema.decay;
  for (std::size_t g = 0; g < params.group_count(); ++g) {
    auto dst = ema.shadow.group(g).values();
    auto src = params.group(g).values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = keep * dst[i] + blend * src[i];
  }
}

// ---------------------------------------------------------------------------
// Network internals

namespace {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
using RowMapConst = Eigen::Map<const RowMatrix>;

constexpr int kKernel = 3;
constexpr int kTaps = kKernel * kKernel;
constexpr int kStride = 2;
constexpr int kPad = 1;

int conv_out(int in) { return (in + 2 * kPad - kKernel) / kStride + 1; }

struct Geometry {
  int in_c, out_c;
  int in_h, in_w, out_h, out_w;
};

std::vector<Geometry> layer_geometry(const ArchConfig& cfg) {
  std::vector<Geometry> g;
  int c = 1, h = cfg.image_height, w = cfg.image_width;
  for (int out_c : cfg.channels) {
    Geometry layer{c, out_c, h, w, conv_out(h), conv_out(w)};
    g.push_back(layer);
    c = out_c;
    h = layer.out_h;
    w = layer.out_w;
  }
  return g;
}

std::string conv_name(std::size_t layer) { return "conv" + std::to_string(layer + 1); }

template <typename S>
struct LayerState {
  Mat<S> col;  // (taps * in_c) x (N * out_h * out_w)
  Mat<S> act;  // out_c x (N * out_h * out_w), post-ReLU
};

template <typename S>
struct CacheData {
  int count = 0;
  std::vector<LayerState<S>> layers;
  Mat<S> embedding;  // D x N
};

// Columns of `src` are (n, y, x) positions holding `c` channels. Rows of
// `col` are ordered (ky, kx, channel) so each tap copies a contiguous run.
template <typename S>
void im2col(const Mat<S>& src, const Geometry& g, int count, Mat<S>& col) {
  const int out_hw = g.out_h * g.out_w;
  const int in_hw = g.in_h * g.in_w;
  col.setZero(kTaps * g.in_c, static_cast<Eigen::Index>(count) * out_hw);
  for (int n = 0; n < count; ++n) {
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox) {
        const Eigen::Index j = static_cast<Eigen::Index>(n) * out_hw + oy * g.out_w + ox;
        for (int ky = 0; ky < kKernel; ++ky) {
          const int iy = oy * kStride - kPad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          for (int kx = 0; kx < kKernel; ++kx) {
            const int ix = ox * kStride - kPad + kx;
            if (ix < 0 || ix >= g.in_w) continue;
            const Eigen::Index src_col = static_cast<Eigen::Index>(n) * in_hw + iy * g.in_w + ix;
            col.col(j).segment((ky * kKernel + kx) * g.in_c, g.in_c) = src.col(src_col);
          }
        }
      }
    }
  }
}

template <typename S>
void col2im(const Mat<S>& dcol, const Geometry& g, int count, Mat<S>& dsrc) {
  const int out_hw = g.out_h * g.out_w;
  const int in_hw = g.in_h * g.in_w;
  dsrc.setZero(g.in_c, static_cast<Eigen::Index>(count) * in_hw);
  for (int n = 0; n < count; ++n) {
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox) {
        const Eigen::Index j = static_cast<Eigen::Index>(n) * out_hw + oy * g.out_w + ox;
        for (int ky = 0; ky < kKernel; ++ky) {
          const int iy = oy * kStride - kPad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          for (int kx = 0; kx < kKernel; ++kx) {
            const int ix = ox * kStride - kPad + kx;
            if (ix < 0 || ix >= g.in_w) continue;
            const Eigen::Index dst_col = static_cast<Eigen::Index>(n) * in_hw + iy * g.in_w + ix;
            dsrc.col(dst_col) += dcol.col(j).segment((ky * kKernel + kx) * g.in_c, g.in_c);
          }
        }
      }
    }
  }
}

template <typename S>
Mat<S> weight_matrix(const ParamTensor& t, int rows, int cols) {
  return RowMapConst(t.values().data(), rows, cols).template cast<S>();
}

template <typename S>
Vec<S> bias_vector(const ParamTensor& t) {
  return Eigen::Map<const Eigen::VectorXd>(t.values().data(), static_cast<Eigen::Index>(t.size()))
      .template cast<S>();
}

template <typename S>
void check_finite(const Mat<S>& m, const std::string& where) {
  if (!m.allFinite()) throw NumericFault(where, "non-finite activation");
}

template <typename S>
ForwardOutput run_forward(const ArchConfig& cfg, const ModelParams& params,
                          const ImageBatch& batch, CacheData<S>* cache) {
  const auto geometry = layer_geometry(cfg);
  const int n = batch.count;
  const Eigen::Index hw = static_cast<Eigen::Index>(batch.image_size());

  Mat<S> current = Eigen::Map<const Eigen::Matrix<float, 1, Eigen::Dynamic>>(
                       batch.pixels.data(), static_cast<Eigen::Index>(n) * hw)
                       .template cast<S>();
  Mat<S> col;
  if (cache) {
    cache->count = n;
    cache->layers.clear();
    cache->layers.resize(geometry.size());
  }

  for (std::size_t l = 0; l < geometry.size(); ++l) {
    const Geometry& g = geometry[l];
    const std::string name = conv_name(l);
    const Mat<S> w = weight_matrix<S>(*params.find(name + ".weight"), g.out_c, kTaps * g.in_c);
    const Vec<S> b = bias_vector<S>(*params.find(name + ".bias"));
    Mat<S>& col_ref = cache ? cache->layers[l].col : col;
    im2col(current, g, n, col_ref);
    Mat<S> z = w * col_ref;
    z.colwise() += b;
    current = z.cwiseMax(S(0));
    check_finite(current, name);
    if (cache) cache->layers[l].act = current;
  }

  const Geometry& last = geometry.back();
  const int pooled = last.out_h * last.out_w;
  Mat<S> embedding(last.out_c, n);
  for (int i = 0; i < n; ++i)
    embedding.col(i) = current.middleCols(static_cast<Eigen::Index>(i) * pooled, pooled).rowwise().mean();

  const int d = last.out_c;
  const Mat<S> head_w = weight_matrix<S>(*params.find("head.weight"), cfg.num_classes, d);
  const Vec<S> head_b = bias_vector<S>(*params.find("head.bias"));
  Mat<S> logits = head_w * embedding;
  logits.colwise() += head_b;
  check_finite(logits, "head");

  ForwardOutput out;
  out.logits = logits.transpose().template cast<double>();
  out.embedding = embedding.transpose().template cast<double>();
  if (cache) cache->embedding = std::move(embedding);
  return out;
}

template <typename S>
void store_grad(ParamTensor& dst, const Mat<S>& rowmajor_source) {
  // dst is row-major [rows, cols]; Eigen source is column-major.
  const Eigen::Index rows = rowmajor_source.rows();
  const Eigen::Index cols = rowmajor_source.cols();
  auto out = dst.values();
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      out[static_cast<std::size_t>(r * cols + c)] = static_cast<double>(rowmajor_source(r, c));
}

template <typename S>
ModelParams run_backward(const SmallConvNet& net, const ModelParams& params,
                         const CacheData<S>& cache, const RowMatrix& dlogits,
                         const RowMatrix& dembedding) {
  const ArchConfig& cfg = net.config();
  const auto geometry = layer_geometry(cfg);
  const int n = cache.count;
  const int d = cfg.embedding_dim();
  const int k = cfg.num_classes;
  if (dlogits.rows() != n || dlogits.cols() != k)
    throw ConfigError("dlogits shape does not match the cached forward pass");
  if (dembedding.size() != 0 && (dembedding.rows() != n || dembedding.cols() != d))
    throw ConfigError("dembedding shape does not match the cached forward pass");

  ModelParams grad = params.zeros_like();
  const Mat<S> dl = dlogits.transpose().template cast<S>();  // K x N

  store_grad<S>(*grad.find("head.weight"), Mat<S>(dl * cache.embedding.transpose()));
  store_grad<S>(*grad.find("head.bias"), Mat<S>(dl.rowwise().sum()));

  const Mat<S> head_w = weight_matrix<S>(*params.find("head.weight"), k, d);
  Mat<S> demb = head_w.transpose() * dl;  // D x N
  if (dembedding.size() != 0) demb += dembedding.transpose().template cast<S>();

  const Geometry& last = geometry.back();
  const int pooled = last.out_h * last.out_w;
  Mat<S> dact(last.out_c, static_cast<Eigen::Index>(n) * pooled);
  for (int i = 0; i < n; ++i)
    dact.middleCols(static_cast<Eigen::Index>(i) * pooled, pooled).colwise() =
        demb.col(i) / static_cast<S>(pooled);

  for (std::size_t l = geometry.size(); l-- > 0;) {
    const Geometry& g = geometry[l];
    const LayerState<S>& state = cache.layers[l];
    const std::string name = conv_name(l);
    Mat<S> dz = (state.act.array() > S(0)).select(dact, S(0));
    store_grad<S>(*grad.find(name + ".weight"), Mat<S>(dz * state.col.transpose()));
    store_grad<S>(*grad.find(name + ".bias"), Mat<S>(dz.rowwise().sum()));
    if (l == 0) break;
    const Mat<S> w = weight_matrix<S>(*params.find(name + ".weight"), g.out_c, kTaps * g.in_c);
    const Mat<S> dcol = w.transpose() * dz;
    col2im(dcol, g, n, dact);
  }
  return grad;
}

template <typename S>
std::uint64_t pattern_hash(const CacheData<S>& cache) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& layer : cache.layers) {
    const S* p = layer.act.data();
    for (Eigen::Index i = 0; i < layer.act.size(); ++i) {
      h ^= (p[i] > S(0)) ? 1u : 0u;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace

struct ForwardCache::Impl {
  std::variant<std::monostate, CacheData<float>, CacheData<double>> data;
};

ForwardCache::ForwardCache() : impl_(std::make_unique<Impl>()) {}
ForwardCache::~ForwardCache() = default;
ForwardCache::ForwardCache(ForwardCache&&) noexcept = default;
ForwardCache& ForwardCache::operator=(ForwardCache&&) noexcept = default;

std::uint64_t ForwardCache::relu_pattern() const {
  return std::visit(
      [](const auto& c) -> std::uint64_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(c)>, std::monostate>)
          return 0;
        else
          return pattern_hash(c);
      },
      impl_->data);
}

// ---------------------------------------------------------------------------
// SmallConvNet

SmallConvNet::SmallConvNet(ArchConfig config) : config_(std::move(config)) {
  if (config_.channels.empty()) throw ConfigError("architecture needs at least one conv block");
  if (config_.num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (config_.image_height < 1 || config_.image_width < 1)
    throw ConfigError("image dimensions must be positive");
  for (int c : config_.channels)
    if (c < 1) throw ConfigError("channel counts must be positive");
}

ModelParams SmallConvNet::zero_params() const {
  ModelParams p;
  int in_c = 1;
  for (std::size_t l = 0; l < config_.channels.size(); ++l) {
    const int out_c = config_.channels[l];
    p.add(conv_name(l) + ".weight", {out_c, kKernel, kKernel, in_c});
    p.add(conv_name(l) + ".bias", {out_c});
    in_c = out_c;
  }
  p.add("head.weight", {config_.num_classes, config_.embedding_dim()});
  p.add("head.bias", {config_.num_classes});
  return p;
}

ModelParams SmallConvNet::init_params(std::uint64_t seed) const {
  ModelParams p = zero_params();
  for (std::size_t g = 0; g < p.group_count(); ++g) {
    ParamTensor& t = p.group(g);
    if (t.shape().size() < 2) continue;  // biases stay zero
    int fan_in = 1;
    for (std::size_t i = 1; i < t.shape().size(); ++i) fan_in *= t.shape()[i];
    const bool is_head = t.name() == "head.weight";
    const double stddev = std::sqrt((is_head ? 1.0 : 2.0) / fan_in);
    Rng rng = make_stream(seed, StreamTag::kInit, g);
    std::normal_distribution<double> normal(0.0, stddev);
    for (double& v : t.values()) v = normal(rng);
  }
  return p;
}

void SmallConvNet::check_inputs(const ModelParams& params, const ImageBatch& batch) const {
  if (batch.height != config_.image_height || batch.width != config_.image_width)
    throw ConfigError("batch image size " + std::to_string(batch.height) + "x" +
                      std::to_string(batch.width) + " does not match architecture " +
                      std::to_string(config_.image_height) + "x" +
                      std::to_string(config_.image_width));
  if (batch.pixels.size() != static_cast<std::size_t>(batch.count) * batch.image_size())
    throw ConfigError("batch pixel buffer has the wrong length");
  if (!params.same_layout(zero_params()))
    throw ConfigError("parameter layout does not match architecture");
}

ForwardOutput SmallConvNet::forward(const ModelParams& params, const ImageBatch& batch) const {
  check_inputs(params, batch);
  if (config_.precision == Precision::kFloat32)
    return run_forward<float>(config_, params, batch, nullptr);
  return run_forward<double>(config_, params, batch, nullptr);
}

ForwardOutput SmallConvNet::forward(const ModelParams& params, const ImageBatch& batch,
                                    ForwardCache& cache) const {
  check_inputs(params, batch);
  auto& data = cache.impl().data;
  if (config_.precision == Precision::kFloat32) {
    data.emplace<CacheData<float>>();
    return run_forward<float>(config_, params, batch, &std::get<CacheData<float>>(data));
  }
  data.emplace<CacheData<double>>();
  return run_forward<double>(config_, params, batch, &std::get<CacheData<double>>(data));
}

ModelParams SmallConvNet::backward(const ModelParams& params, const ForwardCache& cache,
                                   const RowMatrix& dlogits, const RowMatrix& dembedding) const {
  const auto& data = cache.impl().data;
  if (const auto* c = std::get_if<CacheData<float>>(&data))
    return run_backward<float>(*this, params, *c, dlogits, dembedding);
  if (const auto* c = std::get_if<CacheData<double>>(&data))
    return run_backward<double>(*this, params, *c, dlogits, dembedding);
  throw ConfigError("backward called without a cached forward pass");
}

ValueAndGrad value_and_grad(const SmallConvNet& net, const ModelParams& params,
                            const ImageBatch& batch, const OutputLossFn& loss,
                            const std::string& term) {
  ForwardCache cache;
  const ForwardOutput out = net.forward(params, batch, cache);
  OutputLoss l = loss(out);
  if (!std::isfinite(l.value)) throw NumericFault(term, "non-finite loss value");
  if (l.dlogits.size() == 0) l.dlogits = RowMatrix::Zero(out.logits.rows(), out.logits.cols());
  ValueAndGrad result{l.value, net.backward(params, cache, l.dlogits, l.dembedding)};
  if (!result.grad.all_finite()) throw NumericFault(term, "non-finite gradient");
  return result;
}

}  // namespace ltssl
