#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "resmotion/core/tensor.hpp"

// Forward and backward passes of every layer type used by the networks.
// Kernels in this header are the optimized (im2col + GEMM, OpenMP over the
// batch) versions; `reference.hpp` holds the serial loop implementations they
// are tested against.
namespace resmotion::nn {

using Extent3 = std::array<std::size_t, 3>;  // (T, H, W)
using Extent2 = std::array<std::size_t, 2>;  // (H, W)

struct ConvSpec {
  Extent3 kernel{1, 1, 1};
  Extent3 stride{1, 1, 1};
  Extent3 padding{0, 0, 0};
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;

  std::size_t kernel_volume() const { return kernel[0] * kernel[1] * kernel[2]; }
  Shape weight_shape() const {
    return {out_channels, in_channels, kernel[0], kernel[1], kernel[2]};
  }
  // floor((in + 2p - k) / s) + 1 per axis; throws ShapeError naming the axis
  // when the kernel does not fit.
  Extent3 output_extent(const Extent3& input) const;
};

struct Conv2dSpec {
  Extent2 kernel{1, 1};
  Extent2 stride{1, 1};
  Extent2 padding{0, 0};
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;

  Shape weight_shape() const { return {out_channels, in_channels, kernel[0], kernel[1]}; }
  ConvSpec as_3d() const;
};

// Gradients of one layer application. `param_grads` follows the order the
// parameters were passed in (weights, then bias).
struct LayerGrad {
  std::vector<Tensor> param_grads;
  Tensor input_grad;
};

// input [N, C, T, H, W], weights [O, C, kT, kH, kW], bias [O].
Tensor conv3d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      const ConvSpec& spec);
LayerGrad conv3d_backward(const Tensor& input, const Tensor& weights, const ConvSpec& spec,
                          const Tensor& upstream);

// input [N, C, H, W], weights [O, C, kH, kW], bias [O].
Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      const Conv2dSpec& spec);
LayerGrad conv2d_backward(const Tensor& input, const Tensor& weights, const Conv2dSpec& spec,
                          const Tensor& upstream);

// input [N, C, T, H, W]. Backward sends each upstream value to the argmax of
// its window; ties go to the lowest flat index.
Tensor maxpool3d_forward(const Tensor& input, const Extent3& window, const Extent3& stride);
LayerGrad maxpool3d_backward(const Tensor& input, const Extent3& window, const Extent3& stride,
                             const Tensor& upstream);

enum class Activation { relu, elu };
std::string_view to_string(Activation kind);
Activation parse_activation(std::string_view name);

// ELU uses alpha = 1. The ReLU derivative at exactly 0 is 0.
Tensor activation_forward(const Tensor& x, Activation kind);
Tensor activation_backward(const Tensor& x, const Tensor& upstream, Activation kind);

enum class Mode { train, eval };

struct BatchNormParams {
  Tensor gamma;  // [C]
  Tensor beta;   // [C]
};

struct RunningStats {
  Tensor mean;  // [C]
  Tensor var;   // [C], unbiased batch variance
  bool initialized = false;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

// Per-channel normalization over every axis but axis 1. Train mode uses batch
// statistics and folds them into `stats` (the first batch initializes them);
// eval mode requires initialized stats.
Tensor batchnorm_forward(const Tensor& x, const BatchNormParams& params, RunningStats& stats,
                         Mode mode);
// Returns {dgamma, dbeta} and the input gradient for the given mode.
LayerGrad batchnorm_backward(const Tensor& x, const BatchNormParams& params,
                             const RunningStats& stats, Mode mode, const Tensor& upstream);

// x [N, F], weights [O, F], bias [O].
Tensor linear_forward(const Tensor& x, const Tensor& weights, const Tensor& bias);
LayerGrad linear_backward(const Tensor& x, const Tensor& weights, const Tensor& upstream);

// Mean over every axis after the channel axis: [N, C, ...] -> [N, C].
Tensor global_avgpool3d(const Tensor& x);
Tensor global_avgpool3d_backward(const Shape& input_shape, const Tensor& upstream);

// |x[:, :, t] - x[:, :, t + 1]| along the temporal axis of [N, C, T, H, W];
// `signed_diff` keeps the sign instead. Output has T - 1 frames.
Tensor temporal_difference(const Tensor& x, bool signed_diff = false);
Tensor temporal_difference_backward(const Tensor& x, const Tensor& upstream,
                                    bool signed_diff = false);

// Row-wise softmax of [N, K] logits.
Tensor softmax(const Tensor& logits);

struct LossResult {
  double loss = 0.0;  // mean over the batch
  Tensor grad;        // d loss / d logits, (p - onehot) / N
  Tensor probs;
};

LossResult cross_entropy_loss(const Tensor& logits, std::span<const int> labels);

}  // namespace resmotion::nn
