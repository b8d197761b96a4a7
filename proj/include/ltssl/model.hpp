#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ltssl {

/// Row-major double matrix; rows are samples.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// N grayscale images of identical size, each stored row-major.
struct ImageBatch {
  int count = 0;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  ImageBatch() = default;
  ImageBatch(int n, int h, int w)
      : count(n), height(h), width(w), pixels(static_cast<std::size_t>(n) * h * w, 0.0f) {}

  std::size_t image_size() const { return static_cast<std::size_t>(height) * width; }
  std::span<float> image(int i) { return {pixels.data() + i * image_size(), image_size()}; }
  std::span<const float> image(int i) const {
    return {pixels.data() + i * image_size(), image_size()};
  }
};

/// A named parameter array. The shape is fixed at construction.
class ParamTensor {
 public:
  ParamTensor(std::string name, std::vector<int> shape);

  const std::string& name() const { return name_; }
  const std::vector<int>& shape() const { return shape_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }

 private:
  std::string name_;
  std::vector<int> shape_;
  std::vector<double> values_;
};

/// Ordered collection of named parameter arrays. Also used for gradients and
/// optimizer buffers, which share the parameter layout.
class ModelParams {
 public:
  ModelParams() = default;

  ParamTensor& add(std::string name, std::vector<int> shape);

  std::size_t group_count() const { return tensors_.size(); }
  ParamTensor& group(std::size_t i) { return tensors_[i]; }
  const ParamTensor& group(std::size_t i) const { return tensors_[i]; }
  const ParamTensor* find(std::string_view name) const;
  ParamTensor* find(std::string_view name);

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  std::size_t parameter_count() const;
  bool same_layout(const ModelParams& other) const;
  bool all_finite() const;
  ModelParams zeros_like() const;

  /// this += alpha * x. Throws ConfigError on layout mismatch.
  void axpy(double alpha, const ModelParams& x);
  void scale(double alpha);
  /// FNV-1a over the raw bytes of every value, in group order.
  std::uint64_t checksum() const;

 private:
  std::vector<ParamTensor> tensors_;
};

enum class Precision { kFloat32, kFloat64 };

struct ArchConfig {
  int image_height = 32;
  int image_width = 32;
  std::vector<int> channels = {32, 64, 128};
  int num_classes = 10;
  Precision precision = Precision::kFloat32;

  int embedding_dim() const { return channels.empty() ? 0 : channels.back(); }
};

struct ForwardOutput {
  RowMatrix logits;     // N x K
  RowMatrix embedding;  // N x D, pooled penultimate features
};

/// Activations retained by a forward pass for the matching backward pass.
class ForwardCache {
 public:
  ForwardCache();
  ~ForwardCache();
  ForwardCache(ForwardCache&&) noexcept;
  ForwardCache& operator=(ForwardCache&&) noexcept;

  /// Hash of every ReLU on/off state; changes iff the piecewise-linear
  /// region of the network changed.
  std::uint64_t relu_pattern() const;

  struct Impl;
  Impl& impl() { return *impl_; }
  const Impl& impl() const { return *impl_; }

 private:
  std::unique_ptr<Impl> impl_;
};

/// Three stride-2 3x3 conv+ReLU blocks, global average pool to the embedding,
/// then a linear head.
class SmallConvNet {
 public:
  explicit SmallConvNet(ArchConfig config);

  const ArchConfig& config() const { return config_; }

  /// Zero-valued parameters with the architecture's layout.
  ModelParams zero_params() const;
  /// He-normal conv weights, LeCun-normal head, zero biases.
  ModelParams init_params(std::uint64_t seed) const;

  ForwardOutput forward(const ModelParams& params, const ImageBatch& batch) const;
  ForwardOutput forward(const ModelParams& params, const ImageBatch& batch,
                        ForwardCache& cache) const;

  /// Gradients of a loss whose partials w.r.t. logits and embeddings are given.
  /// `dembedding` may be empty (no embedding term).
  ModelParams backward(const ModelParams& params, const ForwardCache& cache,
                       const RowMatrix& dlogits, const RowMatrix& dembedding) const;

 private:
  void check_inputs(const ModelParams& params, const ImageBatch& batch) const;

  ArchConfig config_;
};

/// A loss expressed on the network outputs, with its partial derivatives.
struct OutputLoss {
  double value = 0.0;
  RowMatrix dlogits;
  RowMatrix dembedding;  // empty if the loss ignores embeddings
};

using OutputLossFn = std::function<OutputLoss(const ForwardOutput&)>;

struct ValueAndGrad {
  double value = 0.0;
  ModelParams grad;
};

/// Forward, apply `loss`, backward. Throws NumericFault naming `term` if the
/// gradient is non-finite.
ValueAndGrad value_and_grad(const SmallConvNet& net, const ModelParams& params,
                            const ImageBatch& batch, const OutputLossFn& loss,
                            const std::string& term = "loss");

/// Shadow parameters for evaluation.
struct EmaParams {
  ModelParams shadow;
  double decay = 0.999;
};

/// shadow <- decay * shadow + (1 - decay) * params.
void ema_update(EmaParams& ema, const ModelParams& params);

}  // namespace ltssl
