#pragma once

#include "resmotion/core/ops.hpp"

// Serial nested-loop kernels. Slow and obvious on purpose: they are the
// oracle for the optimized kernels in ops.hpp and the baseline for the
// benchmark target.
namespace resmotion::nn::reference {

Tensor conv3d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      const ConvSpec& spec);
LayerGrad conv3d_backward(const Tensor& input, const Tensor& weights, const ConvSpec& spec,
                          const Tensor& upstream);

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      const Conv2dSpec& spec);

Tensor maxpool3d_forward(const Tensor& input, const Extent3& window, const Extent3& stride);
LayerGrad maxpool3d_backward(const Tensor& input, const Extent3& window, const Extent3& stride,
                             const Tensor& upstream);

}  // namespace resmotion::nn::reference
