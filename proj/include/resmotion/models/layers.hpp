#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "resmotion/core/ops.hpp"
#include "resmotion/core/tensor.hpp"

// Stateful wrappers around the functional kernels: each layer owns its
// parameters and caches what its backward pass needs.
namespace resmotion::models {

using nn::Mode;

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  // Biases and normalization parameters are excluded from weight decay.
  bool decay = true;
};

// Serialized tensor that is not trained by gradient descent (running stats).
struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

struct Registry {
  std::vector<Parameter*> params;
  std::vector<NamedTensor> buffers;
};

class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  // Gradient w.r.t. the input of the most recent forward call; accumulates
  // parameter gradients.
  virtual Tensor backward(const Tensor& upstream) = 0;
  virtual void collect(Registry&) {}

  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

using LayerPtr = std::unique_ptr<Layer>;

// He-normal initialization source: std = sqrt(2 / fan_in).
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}
  Tensor he_normal(Shape shape, std::size_t fan_in);

 private:
  std::mt19937_64 rng_;
};

// Convolution over [N, C, T, H, W] (kernel rank 3) or [N, C, H, W] (rank 2).
class Conv final : public Layer {
 public:
  Conv(std::string name, const nn::ConvSpec& spec, bool spatial_only, Initializer& init);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& upstream) override;
  void collect(Registry& r) override;
  const nn::ConvSpec& spec() const { return spec_; }

 private:
  nn::ConvSpec spec_;
  bool spatial_only_;
  Parameter weight_, bias_;
  Tensor input_;
};

class BatchNorm final : public Layer {
 public:
  BatchNorm(std::string name, std::size_t channels);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& upstream) override;
  void collect(Registry& r) override;

 private:
  Parameter gamma_, beta_;
  Tensor running_mean_, running_var_, initialized_;
  Tensor input_;
  Mode mode_ = Mode::train;
};

class Act final : public Layer {
 public:
  Act(std::string name, nn::Activation kind) : Layer(std::move(name)), kind_(kind) {}
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& upstream) override;

 private:
  nn::Activation kind_;
  Tensor input_;
};

// Window-2 stride-2 max pooling; axes with extent 1 are left alone.
// Accepts [N, C, T, H, W] or [N, C, H, W].
class MaxPool final : public Layer {
 public:
  explicit MaxPool(std::string name) : Layer(std::move(name)) {}
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& upstream) override;
  static nn::Extent3 window_for(const nn::Extent3& extent);

 private:
  Tensor input_;
  nn::Extent3 window_{};
};

class TemporalDiff final : public Layer {
 public:
  TemporalDiff(std::string name, bool signed_diff)
      : Layer(std::move(name)), signed_(signed_diff) {}
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& upstream) override;

 private:
  bool signed_;
  Tensor input_;
};

class GlobalAvgPool final : public Layer {
 public:
  explicit GlobalAvgPool(std::string name) : Layer(std::move(name)) {}
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& upstream) override;

 private:
  Shape input_shape_;
};

class Linear final : public Layer {
 public:
  Linear(std::string name, std::size_t in_features, std::size_t out_features, Initializer& init);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& upstream) override;
  void collect(Registry& r) override;

 private:
  Parameter weight_, bias_;
  Tensor input_;
};

// Basic residual block: conv-bn-act-conv-bn plus shortcut, then activation.
// Downsampling blocks either stride their first convolution and shortcut
// (`stride` variant) or keep stride 1 and max-pool the block output
// (`pool` variant).
struct BlockOptions {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  bool downsample = false;
  bool pool_variant = false;
  bool spatial_only = false;  // 2D network
  bool batchnorm = true;
  nn::Activation activation = nn::Activation::relu;
};

class ResidualBlock final : public Layer {
 public:
  ResidualBlock(std::string name, const BlockOptions& options, Initializer& init);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& upstream) override;
  void collect(Registry& r) override;

 private:
  std::vector<LayerPtr> main_;
  std::vector<LayerPtr> shortcut_;
  Act out_act_;
  std::unique_ptr<MaxPool> pool_;
};

}  // namespace resmotion::models
