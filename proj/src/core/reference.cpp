#include "resmotion/core/reference.hpp"

#include "resmotion/core/errors.hpp"

namespace resmotion::nn::reference {
namespace {

// Input coordinate for output position `o` and kernel tap `k`, or -1 when it
// falls in the zero padding.
std::ptrdiff_t source(std::size_t o, std::size_t k, std::size_t stride, std::size_t pad,
                      std::size_t extent) {
  const auto i = static_cast<std::ptrdiff_t>(o * stride + k) - static_cast<std::ptrdiff_t>(pad);
  return (i < 0 || i >= static_cast<std::ptrdiff_t>(extent)) ? -1 : i;
}

}  // namespace

Tensor conv3d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      const ConvSpec& spec) {
  if (input.rank() != 5 || input.dim(1) != spec.in_channels ||
      weights.shape() != spec.weight_shape() || bias.shape() != Shape{spec.out_channels}) {
    throw ShapeError("reference conv3d: inconsistent shapes");
  }
  const std::size_t N = input.dim(0), C = input.dim(1);
  const std::size_t T = input.dim(2), H = input.dim(3), W = input.dim(4);
  const Extent3 out = spec.output_extent({T, H, W});
  const std::size_t O = spec.out_channels;
  Tensor y({N, O, out[0], out[1], out[2]});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t to = 0; to < out[0]; ++to)
        for (std::size_t ho = 0; ho < out[1]; ++ho)
          for (std::size_t wo = 0; wo < out[2]; ++wo) {
            double acc = bias[o];
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t kt = 0; kt < spec.kernel[0]; ++kt) {
                const auto ti = source(to, kt, spec.stride[0], spec.padding[0], T);
                if (ti < 0) continue;
                for (std::size_t kh = 0; kh < spec.kernel[1]; ++kh) {
                  const auto hi = source(ho, kh, spec.stride[1], spec.padding[1], H);
                  if (hi < 0) continue;
                  for (std::size_t kw = 0; kw < spec.kernel[2]; ++kw) {
                    const auto wi = source(wo, kw, spec.stride[2], spec.padding[2], W);
                    if (wi < 0) continue;
                    acc += weights.at({o, c, kt, kh, kw}) *
                           input.at({n, c, static_cast<std::size_t>(ti),
                                     static_cast<std::size_t>(hi), static_cast<std::size_t>(wi)});
                  }
                }
              }
            y.at({n, o, to, ho, wo}) = acc;
          }
  return y;
}

LayerGrad conv3d_backward(const Tensor& input, const Tensor& weights, const ConvSpec& spec,
                          const Tensor& upstream) {
  const std::size_t N = input.dim(0), C = input.dim(1);
  const std::size_t T = input.dim(2), H = input.dim(3), W = input.dim(4);
  const Extent3 out = spec.output_extent({T, H, W});
  const std::size_t O = spec.out_channels;
  if (upstream.shape() != Shape{N, O, out[0], out[1], out[2]}) {
    throw ShapeError("reference conv3d backward: upstream shape mismatch");
  }
  Tensor dw(weights.shape()), db({O}), dx(input.shape());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t to = 0; to < out[0]; ++to)
        for (std::size_t ho = 0; ho < out[1]; ++ho)
          for (std::size_t wo = 0; wo < out[2]; ++wo) {
            const double g = upstream.at({n, o, to, ho, wo});
            db[o] += g;
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t kt = 0; kt < spec.kernel[0]; ++kt) {
                const auto ti = source(to, kt, spec.stride[0], spec.padding[0], T);
                if (ti < 0) continue;
                for (std::size_t kh = 0; kh < spec.kernel[1]; ++kh) {
                  const auto hi = source(ho, kh, spec.stride[1], spec.padding[1], H);
                  if (hi < 0) continue;
                  for (std::size_t kw = 0; kw < spec.kernel[2]; ++kw) {
                    const auto wi = source(wo, kw, spec.stride[2], spec.padding[2], W);
                    if (wi < 0) continue;
                    const auto t = static_cast<std::size_t>(ti);
                    const auto h = static_cast<std::size_t>(hi);
                    const auto w = static_cast<std::size_t>(wi);
                    dw.at({o, c, kt, kh, kw}) += g * input.at({n, c, t, h, w});
                    dx.at({n, c, t, h, w}) += g * weights.at({o, c, kt, kh, kw});
                  }
                }
              }
          }
  return LayerGrad{{std::move(dw), std::move(db)}, std::move(dx)};
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      const Conv2dSpec& spec) {
  if (input.rank() != 4 || input.dim(1) != spec.in_channels ||
      weights.shape() != spec.weight_shape() || bias.shape() != Shape{spec.out_channels}) {
    throw ShapeError("reference conv2d: inconsistent shapes");
  }
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t O = spec.out_channels;
  const Extent3 out = spec.as_3d().output_extent({1, H, W});
  Tensor y({N, O, out[1], out[2]});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t ho = 0; ho < out[1]; ++ho)
        for (std::size_t wo = 0; wo < out[2]; ++wo) {
          double acc = bias[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t kh = 0; kh < spec.kernel[0]; ++kh) {
              const auto hi = source(ho, kh, spec.stride[0], spec.padding[0], H);
              if (hi < 0) continue;
              for (std::size_t kw = 0; kw < spec.kernel[1]; ++kw) {
                const auto wi = source(wo, kw, spec.stride[1], spec.padding[1], W);
                if (wi < 0) continue;
                acc += weights.at({o, c, kh, kw}) *
                       input.at({n, c, static_cast<std::size_t>(hi), static_cast<std::size_t>(wi)});
              }
            }
          y.at({n, o, ho, wo}) = acc;
        }
  return y;
}

Tensor maxpool3d_forward(const Tensor& input, const Extent3& window, const Extent3& stride) {
  const std::size_t N = input.dim(0), C = input.dim(1);
  const Extent3 in{input.dim(2), input.dim(3), input.dim(4)};
  Extent3 out{};
  for (std::size_t a = 0; a < 3; ++a) {
    if (window[a] > in[a]) throw ShapeError("reference maxpool3d: window larger than input");
    out[a] = (in[a] - window[a]) / stride[a] + 1;
  }
  Tensor y({N, C, out[0], out[1], out[2]});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t to = 0; to < out[0]; ++to)
        for (std::size_t ho = 0; ho < out[1]; ++ho)
          for (std::size_t wo = 0; wo < out[2]; ++wo) {
            double best = input.at({n, c, to * stride[0], ho * stride[1], wo * stride[2]});
            for (std::size_t dt = 0; dt < window[0]; ++dt)
              for (std::size_t dh = 0; dh < window[1]; ++dh)
                for (std::size_t dw = 0; dw < window[2]; ++dw) {
                  const double v = input.at(
                      {n, c, to * stride[0] + dt, ho * stride[1] + dh, wo * stride[2] + dw});
                  if (v > best) best = v;
                }
            y.at({n, c, to, ho, wo}) = best;
          }
  return y;
}

LayerGrad maxpool3d_backward(const Tensor& input, const Extent3& window, const Extent3& stride,
                             const Tensor& upstream) {
  const std::size_t N = input.dim(0), C = input.dim(1);
  const Extent3 in{input.dim(2), input.dim(3), input.dim(4)};
  Extent3 out{};
  for (std::size_t a = 0; a < 3; ++a) {
    if (window[a] > in[a]) throw ShapeError("reference maxpool3d: window larger than input");
    out[a] = (in[a] - window[a]) / stride[a] + 1;
  }
  Tensor dx(input.shape());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t to = 0; to < out[0]; ++to)
        for (std::size_t ho = 0; ho < out[1]; ++ho)
          for (std::size_t wo = 0; wo < out[2]; ++wo) {
            // Scan in row-major order; the first maximum wins.
            std::size_t bt = to * stride[0], bh = ho * stride[1], bw = wo * stride[2];
            double best = input.at({n, c, bt, bh, bw});
            for (std::size_t dt = 0; dt < window[0]; ++dt)
              for (std::size_t dh = 0; dh < window[1]; ++dh)
                for (std::size_t dw = 0; dw < window[2]; ++dw) {
                  const std::size_t t = to * stride[0] + dt, h = ho * stride[1] + dh,
                                    w = wo * stride[2] + dw;
                  if (input.at({n, c, t, h, w}) > best) {
                    best = input.at({n, c, t, h, w});
                    bt = t, bh = h, bw = w;
                  }
                }
            dx.at({n, c, bt, bh, bw}) += upstream.at({n, c, to, ho, wo});
          }
  return LayerGrad{{}, std::move(dx)};
}

}  // namespace resmotion::nn::reference
