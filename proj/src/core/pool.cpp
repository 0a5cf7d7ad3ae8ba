#include <algorithm>
#include <limits>
#include <string>

#include "resmotion/core/errors.hpp"
#include "resmotion/core/ops.hpp"
#include "shape_checks.hpp"

namespace resmotion::nn {
namespace {

struct PoolGeometry {
  std::size_t planes;
  Extent3 in, out;
};

PoolGeometry check_pool(const Tensor& input, const Extent3& window, const Extent3& stride) {
  static constexpr const char* kAxis[] = {"T", "H", "W"};
  detail::require_rank(input, 5, "maxpool3d input [N, C, T, H, W]");
  PoolGeometry g{input.dim(0) * input.dim(1), {input.dim(2), input.dim(3), input.dim(4)}, {}};
  for (std::size_t a = 0; a < 3; ++a) {
    if (window[a] == 0 || stride[a] == 0) {
      throw ShapeError(std::string("maxpool3d: axis ") + kAxis[a] + " has zero window or stride");
    }
    if (window[a] > g.in[a]) {
      throw ShapeError(std::string("maxpool3d: window ") + std::to_string(window[a]) +
                       " larger than input extent " + std::to_string(g.in[a]) + " on axis " +
                       kAxis[a]);
    }
    g.out[a] = (g.in[a] - window[a]) / stride[a] + 1;
  }
  return g;
}

// Flat offset (within one plane) of the window maximum; strict comparison in
// increasing offset order keeps the lowest index on ties.
std::size_t window_argmax(const double* plane, const PoolGeometry& g, const Extent3& window,
                          const Extent3& stride, std::size_t to, std::size_t ho, std::size_t wo) {
  std::size_t best = (to * stride[0] * g.in[1] + ho * stride[1]) * g.in[2] + wo * stride[2];
  double best_value = plane[best];
  for (std::size_t dt = 0; dt < window[0]; ++dt) {
    for (std::size_t dh = 0; dh < window[1]; ++dh) {
      const std::size_t row = ((to * stride[0] + dt) * g.in[1] + ho * stride[1] + dh) * g.in[2];
      for (std::size_t dw = 0; dw < window[2]; ++dw) {
        const std::size_t idx = row + wo * stride[2] + dw;
        if (plane[idx] > best_value) {
          best_value = plane[idx];
          best = idx;
        }
      }
    }
  }
  return best;
}

}  // namespace

Tensor maxpool3d_forward(const Tensor& input, const Extent3& window, const Extent3& stride) {
  const PoolGeometry g = check_pool(input, window, stride);
  Tensor out({input.dim(0), input.dim(1), g.out[0], g.out[1], g.out[2]});
  const std::size_t in_volume = g.in[0] * g.in[1] * g.in[2];
  const std::size_t out_volume = g.out[0] * g.out[1] * g.out[2];
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(g.planes); ++p) {
    const double* plane = input.data() + static_cast<std::size_t>(p) * in_volume;
    double* dst = out.data() + static_cast<std::size_t>(p) * out_volume;
    for (std::size_t to = 0; to < g.out[0]; ++to)
      for (std::size_t ho = 0; ho < g.out[1]; ++ho)
        for (std::size_t wo = 0; wo < g.out[2]; ++wo)
          *dst++ = plane[window_argmax(plane, g, window, stride, to, ho, wo)];
  }
  return out;
}

LayerGrad maxpool3d_backward(const Tensor& input, const Extent3& window, const Extent3& stride,
                             const Tensor& upstream) {
  const PoolGeometry g = check_pool(input, window, stride);
  detail::require_shape(upstream, {input.dim(0), input.dim(1), g.out[0], g.out[1], g.out[2]},
                        "maxpool3d backward upstream");
  Tensor grad(input.shape());
  const std::size_t in_volume = g.in[0] * g.in[1] * g.in[2];
  const std::size_t out_volume = g.out[0] * g.out[1] * g.out[2];
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(g.planes); ++p) {
    const double* plane = input.data() + static_cast<std::size_t>(p) * in_volume;
    const double* dy = upstream.data() + static_cast<std::size_t>(p) * out_volume;
    double* dx = grad.data() + static_cast<std::size_t>(p) * in_volume;
    for (std::size_t to = 0; to < g.out[0]; ++to)
      for (std::size_t ho = 0; ho < g.out[1]; ++ho)
        for (std::size_t wo = 0; wo < g.out[2]; ++wo)
          dx[window_argmax(plane, g, window, stride, to, ho, wo)] += *dy++;
  }
  return LayerGrad{{}, std::move(grad)};
}

Tensor global_avgpool3d(const Tensor& x) {
  if (x.rank() < 3) {
    throw ShapeError("global_avgpool3d: expected [N, C, ...], got " + shape_string(x.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t inner = x.size() / (n * c);
  Tensor out({n, c});
  for (std::size_t p = 0; p < n * c; ++p) {
    double s = 0.0;
    const double* src = x.data() + p * inner;
    for (std::size_t i = 0; i < inner; ++i) s += src[i];
    out[p] = s / static_cast<double>(inner);
  }
  return out;
}

Tensor global_avgpool3d_backward(const Shape& input_shape, const Tensor& upstream) {
  if (input_shape.size() < 3) throw ShapeError("global_avgpool3d backward: bad input shape");
  detail::require_shape(upstream, {input_shape[0], input_shape[1]}, "global_avgpool3d upstream");
  Tensor grad(input_shape);
  const std::size_t planes = input_shape[0] * input_shape[1];
  const std::size_t inner = grad.size() / planes;
  for (std::size_t p = 0; p < planes; ++p) {
    const double v = upstream[p] / static_cast<double>(inner);
    std::fill(grad.data() + p * inner, grad.data() + (p + 1) * inner, v);
  }
  return grad;
}

}  // namespace resmotion::nn
