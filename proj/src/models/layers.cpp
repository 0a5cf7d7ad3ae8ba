#include "resmotion/models/layers.hpp"

#include <cmath>

#include "resmotion/core/errors.hpp"

namespace resmotion::models {

Tensor Initializer::he_normal(Shape shape, std::size_t fan_in) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (auto& v : t.values()) v = dist(rng_);
  return t;
}

namespace {

Tensor lift(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("2D layer expects [N, C, H, W], got " + shape_string(x.shape()));
  return x.reshaped({x.dim(0), x.dim(1), 1, x.dim(2), x.dim(3)});
}

Tensor drop(Tensor x) {
  return std::move(x).reshaped({x.dim(0), x.dim(1), x.dim(3), x.dim(4)});
}

}  // namespace

// ---- Conv --------------------------------------------------------------------

Conv::Conv(std::string name, const nn::ConvSpec& spec, bool spatial_only, Initializer& init)
    : Layer(std::move(name)), spec_(spec), spatial_only_(spatial_only) {
  weight_.name = this->name() + ".weight";
  weight_.value = init.he_normal(spec.weight_shape(), spec.in_channels * spec.kernel_volume());
  weight_.grad = Tensor::zeros_like(weight_.value);
  bias_.name = this->name() + ".bias";
  bias_.value = Tensor({spec.out_channels});
  bias_.grad = Tensor({spec.out_channels});
  bias_.decay = false;
}

Tensor Conv::forward(const Tensor& x, Mode) {
  input_ = spatial_only_ ? lift(x) : x;
  Tensor y = nn::conv3d_forward(input_, weight_.value, bias_.value, spec_);
  return spatial_only_ ? drop(std::move(y)) : y;
}

Tensor Conv::backward(const Tensor& upstream) {
  nn::LayerGrad g = nn::conv3d_backward(input_, weight_.value, spec_,
                                        spatial_only_ ? lift(upstream) : upstream);
  weight_.grad += g.param_grads[0];
  bias_.grad += g.param_grads[1];
  return spatial_only_ ? drop(std::move(g.input_grad)) : std::move(g.input_grad);
}

void Conv::collect(Registry& r) {
  r.params.push_back(&weight_);
  r.params.push_back(&bias_);
}

// ---- BatchNorm ---------------------------------------------------------------

BatchNorm::BatchNorm(std::string name, std::size_t channels)
    : Layer(std::move(name)),
      running_mean_({channels}),
      running_var_({channels}, 1.0),
      initialized_({1}) {
  gamma_ = {this->name() + ".gamma", Tensor({channels}, 1.0), Tensor({channels}), false};
  beta_ = {this->name() + ".beta", Tensor({channels}), Tensor({channels}), false};
}

Tensor BatchNorm::forward(const Tensor& x, Mode mode) {
  input_ = x;
  mode_ = mode;
  nn::RunningStats stats{std::move(running_mean_), std::move(running_var_), initialized_[0] != 0.0};
  Tensor y = nn::batchnorm_forward(x, {gamma_.value, beta_.value}, stats, mode);
  running_mean_ = std::move(stats.mean);
  running_var_ = std::move(stats.var);
  initialized_[0] = stats.initialized ? 1.0 : 0.0;
  return y;
}

Tensor BatchNorm::backward(const Tensor& upstream) {
  const nn::RunningStats stats{running_mean_, running_var_, initialized_[0] != 0.0};
  nn::LayerGrad g =
      nn::batchnorm_backward(input_, {gamma_.value, beta_.value}, stats, mode_, upstream);
  gamma_.grad += g.param_grads[0];
  beta_.grad += g.param_grads[1];
  return std::move(g.input_grad);
}

void BatchNorm::collect(Registry& r) {
  r.params.push_back(&gamma_);
  r.params.push_back(&beta_);
  r.buffers.push_back({name() + ".running_mean", &running_mean_});
  r.buffers.push_back({name() + ".running_var", &running_var_});
  r.buffers.push_back({name() + ".initialized", &initialized_});
}

// ---- Pointwise / pooling -----------------------------------------------------

Tensor Act::forward(const Tensor& x, Mode) {
  input_ = x;
  return nn::activation_forward(x, kind_);
}

Tensor Act::backward(const Tensor& upstream) {
  return nn::activation_backward(input_, upstream, kind_);
}

nn::Extent3 MaxPool::window_for(const nn::Extent3& extent) {
  nn::Extent3 w{};
  for (std::size_t a = 0; a < 3; ++a) w[a] = extent[a] >= 2 ? 2 : 1;
  return w;
}

Tensor MaxPool::forward(const Tensor& x, Mode) {
  const bool flat = x.rank() == 4;
  input_ = flat ? lift(x) : x;
  window_ = window_for({input_.dim(2), input_.dim(3), input_.dim(4)});
  Tensor y = nn::maxpool3d_forward(input_, window_, window_);
  return flat ? drop(std::move(y)) : y;
}

Tensor MaxPool::backward(const Tensor& upstream) {
  const bool flat = upstream.rank() == 4;
  nn::LayerGrad g = nn::maxpool3d_backward(input_, window_, window_, flat ? lift(upstream) : upstream);
  return flat ? drop(std::move(g.input_grad)) : std::move(g.input_grad);
}

Tensor TemporalDiff::forward(const Tensor& x, Mode) {
  input_ = x;
  return nn::temporal_difference(x, signed_);
}

Tensor TemporalDiff::backward(const Tensor& upstream) {
  return nn::temporal_difference_backward(input_, upstream, signed_);
}

Tensor GlobalAvgPool::forward(const Tensor& x, Mode) {
  input_shape_ = x.shape();
  return nn::global_avgpool3d(x);
}

Tensor GlobalAvgPool::backward(const Tensor& upstream) {
  return nn::global_avgpool3d_backward(input_shape_, upstream);
}

// ---- Linear ------------------------------------------------------------------

Linear::Linear(std::string name, std::size_t in_features, std::size_t out_features,
               Initializer& init)
    : Layer(std::move(name)) {
  weight_.name = this->name() + ".weight";
  weight_.value = init.he_normal({out_features, in_features}, in_features);
  weight_.grad = Tensor::zeros_like(weight_.value);
  bias_ = {this->name() + ".bias", Tensor({out_features}), Tensor({out_features}), false};
}

Tensor Linear::forward(const Tensor& x, Mode) {
  input_ = x;
  return nn::linear_forward(x, weight_.value, bias_.value);
}

Tensor Linear::backward(const Tensor& upstream) {
  nn::LayerGrad g = nn::linear_backward(input_, weight_.value, upstream);
  weight_.grad += g.param_grads[0];
  bias_.grad += g.param_grads[1];
  return std::move(g.input_grad);
}

void Linear::collect(Registry& r) {
  r.params.push_back(&weight_);
  r.params.push_back(&bias_);
}

// ---- ResidualBlock -------------------------------------------------------------

namespace {

nn::ConvSpec block_conv(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                        bool spatial_only) {
  const std::size_t pad = kernel / 2;
  nn::ConvSpec s;
  s.kernel = {spatial_only ? 1 : kernel, kernel, kernel};
  s.stride = {spatial_only ? 1 : stride, stride, stride};
  s.padding = {spatial_only ? 0 : pad, pad, pad};
  s.in_channels = in;
  s.out_channels = out;
  return s;
}

}  // namespace

ResidualBlock::ResidualBlock(std::string name, const BlockOptions& o, Initializer& init)
    : Layer(std::move(name)), out_act_(this->name() + ".act_out", o.activation) {
  const std::size_t stride = (o.downsample && !o.pool_variant) ? 2 : 1;
  const std::string& n = this->name();
  main_.push_back(std::make_unique<Conv>(
      n + ".conv1", block_conv(o.in_channels, o.out_channels, 3, stride, o.spatial_only),
      o.spatial_only, init));
  if (o.batchnorm) main_.push_back(std::make_unique<BatchNorm>(n + ".bn1", o.out_channels));
  main_.push_back(std::make_unique<Act>(n + ".act1", o.activation));
  main_.push_back(std::make_unique<Conv>(
      n + ".conv2", block_conv(o.out_channels, o.out_channels, 3, 1, o.spatial_only),
      o.spatial_only, init));
  if (o.batchnorm) main_.push_back(std::make_unique<BatchNorm>(n + ".bn2", o.out_channels));

  if (stride != 1 || o.in_channels != o.out_channels) {
    shortcut_.push_back(std::make_unique<Conv>(
        n + ".shortcut.conv", block_conv(o.in_channels, o.out_channels, 1, stride, o.spatial_only),
        o.spatial_only, init));
    if (o.batchnorm) shortcut_.push_back(std::make_unique<BatchNorm>(n + ".shortcut.bn", o.out_channels));
  }
  if (o.downsample && o.pool_variant) pool_ = std::make_unique<MaxPool>(n + ".pool");
}

Tensor ResidualBlock::forward(const Tensor& x, Mode mode) {
  Tensor h = x;
  for (auto& l : main_) h = l->forward(h, mode);
  Tensor s = x;
  for (auto& l : shortcut_) s = l->forward(s, mode);
  h += s;
  h = out_act_.forward(h, mode);
  return pool_ ? pool_->forward(h, mode) : h;
}

Tensor ResidualBlock::backward(const Tensor& upstream) {
  Tensor g = pool_ ? pool_->backward(upstream) : upstream;
  g = out_act_.backward(g);
  Tensor gs = g;
  for (auto it = shortcut_.rbegin(); it != shortcut_.rend(); ++it) gs = (*it)->backward(gs);
  for (auto it = main_.rbegin(); it != main_.rend(); ++it) g = (*it)->backward(g);
  g += gs;
  return g;
}

void ResidualBlock::collect(Registry& r) {
  for (auto& l : main_) l->collect(r);
  for (auto& l : shortcut_) l->collect(r);
}

}  // namespace resmotion::models
