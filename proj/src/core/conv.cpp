#include <algorithm>
#include <string>

#include <Eigen/Core>
#include <omp.h>

#include "resmotion/core/errors.hpp"
#include "resmotion/core/ops.hpp"
#include "shape_checks.hpp"

namespace resmotion::nn {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct ConvGeometry {
  std::size_t batch, channels, out_channels;
  Extent3 in, out;
  std::size_t in_volume() const { return in[0] * in[1] * in[2]; }
  std::size_t out_volume() const { return out[0] * out[1] * out[2]; }
};

ConvGeometry check_conv(const Tensor& input, const Tensor& weights, const ConvSpec& spec) {
  detail::require_rank(input, 5, "conv3d input [N, C, T, H, W]");
  if (input.dim(1) != spec.in_channels) {
    throw ShapeError("conv3d: axis C of input has " + std::to_string(input.dim(1)) +
                     " channels, spec expects " + std::to_string(spec.in_channels));
  }
  if (weights.shape() != spec.weight_shape()) {
    throw ShapeError("conv3d: weights shape " + shape_string(weights.shape()) +
                     " does not match spec " + shape_string(spec.weight_shape()));
  }
  ConvGeometry g{input.dim(0), input.dim(1), spec.out_channels,
                 {input.dim(2), input.dim(3), input.dim(4)}, {}};
  g.out = spec.output_extent(g.in);
  return g;
}

bool is_pointwise(const ConvSpec& spec) {
  return spec.kernel == Extent3{1, 1, 1} && spec.stride == Extent3{1, 1, 1} &&
         spec.padding == Extent3{0, 0, 0};
}

// Output positions [lo, hi) along one axis whose input index
// o * stride + k - pad lands inside [0, extent).
struct ValidRange {
  std::size_t lo, hi;
};

ValidRange valid_range(std::size_t k, std::size_t stride, std::size_t pad, std::size_t extent,
                       std::size_t out) {
  const auto first = static_cast<std::ptrdiff_t>(pad) - static_cast<std::ptrdiff_t>(k);
  std::size_t lo = 0;
  if (first > 0) lo = (static_cast<std::size_t>(first) + stride - 1) / stride;
  const auto last = static_cast<std::ptrdiff_t>(extent) - 1 + first;  // o * stride <= last
  std::size_t hi = last < 0 ? 0 : static_cast<std::size_t>(last) / stride + 1;
  hi = std::min(hi, out);
  return {std::min(lo, hi), hi};
}

// Unfolds one sample [C, T, H, W] into a [C*kT*kH*kW, To*Ho*Wo] matrix.
void im2col(const double* src, const ConvGeometry& g, const ConvSpec& spec, double* col) {
  const auto [kt_n, kh_n, kw_n] = spec.kernel;
  const std::size_t out_volume = g.out_volume();
  const std::size_t sw = spec.stride[2];
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = src + c * g.in_volume();
    for (std::size_t kt = 0; kt < kt_n; ++kt) {
      const ValidRange rt = valid_range(kt, spec.stride[0], spec.padding[0], g.in[0], g.out[0]);
      for (std::size_t kh = 0; kh < kh_n; ++kh) {
        const ValidRange rh = valid_range(kh, spec.stride[1], spec.padding[1], g.in[1], g.out[1]);
        for (std::size_t kw = 0; kw < kw_n; ++kw, ++row) {
          const ValidRange rw = valid_range(kw, sw, spec.padding[2], g.in[2], g.out[2]);
          double* dst = col + row * out_volume;
          std::fill(dst, dst + out_volume, 0.0);
          for (std::size_t to = rt.lo; to < rt.hi; ++to) {
            const std::size_t ti = to * spec.stride[0] + kt - spec.padding[0];
            for (std::size_t ho = rh.lo; ho < rh.hi; ++ho) {
              const std::size_t hi = ho * spec.stride[1] + kh - spec.padding[1];
              double* line = dst + (to * g.out[1] + ho) * g.out[2];
              const double* in_line = plane + (ti * g.in[1] + hi) * g.in[2];
              if (rw.lo == rw.hi) continue;
              const double* first = in_line + rw.lo * sw + kw - spec.padding[2];
              if (sw == 1) {
                std::copy(first, first + (rw.hi - rw.lo), line + rw.lo);
              } else {
                for (std::size_t i = 0; i < rw.hi - rw.lo; ++i) line[rw.lo + i] = first[i * sw];
              }
            }
          }
        }
      }
    }
  }
}

// Inverse scatter of im2col: accumulates a column matrix into one sample.
void col2im(const double* col, const ConvGeometry& g, const ConvSpec& spec, double* dst) {
  const auto [kt_n, kh_n, kw_n] = spec.kernel;
  const std::size_t out_volume = g.out_volume();
  const std::size_t sw = spec.stride[2];
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* plane = dst + c * g.in_volume();
    for (std::size_t kt = 0; kt < kt_n; ++kt) {
      const ValidRange rt = valid_range(kt, spec.stride[0], spec.padding[0], g.in[0], g.out[0]);
      for (std::size_t kh = 0; kh < kh_n; ++kh) {
        const ValidRange rh = valid_range(kh, spec.stride[1], spec.padding[1], g.in[1], g.out[1]);
        for (std::size_t kw = 0; kw < kw_n; ++kw, ++row) {
          const ValidRange rw = valid_range(kw, sw, spec.padding[2], g.in[2], g.out[2]);
          const double* src = col + row * out_volume;
          for (std::size_t to = rt.lo; to < rt.hi; ++to) {
            const std::size_t ti = to * spec.stride[0] + kt - spec.padding[0];
            for (std::size_t ho = rh.lo; ho < rh.hi; ++ho) {
              const std::size_t hi = ho * spec.stride[1] + kh - spec.padding[1];
              const double* line = src + (to * g.out[1] + ho) * g.out[2];
              if (rw.lo == rw.hi) continue;
              double* first = plane + (ti * g.in[1] + hi) * g.in[2] + rw.lo * sw + kw - spec.padding[2];
              const double* from = line + rw.lo;
              if (sw == 1) {
                for (std::size_t i = 0; i < rw.hi - rw.lo; ++i) first[i] += from[i];
              } else {
                for (std::size_t i = 0; i < rw.hi - rw.lo; ++i) first[i * sw] += from[i];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

Extent3 ConvSpec::output_extent(const Extent3& input) const {
  static constexpr const char* kAxis[] = {"T", "H", "W"};
  Extent3 out{};
  for (std::size_t a = 0; a < 3; ++a) {
    if (kernel[a] == 0 || stride[a] == 0) {
      throw ShapeError(std::string("conv: axis ") + kAxis[a] + " has zero kernel or stride");
    }
    const std::size_t padded = input[a] + 2 * padding[a];
    if (padded < kernel[a]) {
      throw ShapeError(std::string("conv: axis ") + kAxis[a] + " kernel " +
                       std::to_string(kernel[a]) + " exceeds padded extent " +
                       std::to_string(padded));
    }
    out[a] = (padded - kernel[a]) / stride[a] + 1;
  }
  return out;
}

ConvSpec Conv2dSpec::as_3d() const {
  return ConvSpec{{1, kernel[0], kernel[1]},
                  {1, stride[0], stride[1]},
                  {0, padding[0], padding[1]},
                  in_channels,
                  out_channels};
}

Tensor conv3d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      const ConvSpec& spec) {
  const ConvGeometry g = check_conv(input, weights, spec);
  if (bias.shape() != Shape{spec.out_channels}) {
    throw ShapeError("conv3d: bias shape " + shape_string(bias.shape()) + " != [O]");
  }
  const std::size_t rows = spec.in_channels * spec.kernel_volume();
  const std::size_t cols = g.out_volume();
  Tensor out({g.batch, g.out_channels, g.out[0], g.out[1], g.out[2]});
  const ConstMatrixMap w(weights.data(), static_cast<Eigen::Index>(g.out_channels),
                         static_cast<Eigen::Index>(rows));
  const bool pointwise = is_pointwise(spec);

#pragma omp parallel
  {
    std::vector<double> col(pointwise ? 0 : rows * cols);
#pragma omp for schedule(static)
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(g.batch); ++n) {
      const double* src = input.data() + static_cast<std::size_t>(n) * g.channels * g.in_volume();
      const double* col_ptr = src;
      if (!pointwise) {
        im2col(src, g, spec, col.data());
        col_ptr = col.data();
      }
      MatrixMap y(out.data() + static_cast<std::size_t>(n) * g.out_channels * cols,
                  static_cast<Eigen::Index>(g.out_channels), static_cast<Eigen::Index>(cols));
      y.noalias() = w * ConstMatrixMap(col_ptr, static_cast<Eigen::Index>(rows),
                                       static_cast<Eigen::Index>(cols));
      for (std::size_t o = 0; o < g.out_channels; ++o) y.row(static_cast<Eigen::Index>(o)).array() += bias[o];
    }
  }
  return out;
}

LayerGrad conv3d_backward(const Tensor& input, const Tensor& weights, const ConvSpec& spec,
                          const Tensor& upstream) {
  const ConvGeometry g = check_conv(input, weights, spec);
  const Shape expected{g.batch, g.out_channels, g.out[0], g.out[1], g.out[2]};
  if (upstream.shape() != expected) {
    throw ShapeError("conv3d backward: upstream shape " + shape_string(upstream.shape()) +
                     " != forward output " + shape_string(expected));
  }
  const std::size_t rows = spec.in_channels * spec.kernel_volume();
  const std::size_t cols = g.out_volume();
  const bool pointwise = is_pointwise(spec);

  Tensor grad_w(weights.shape());
  Tensor grad_b({g.out_channels});
  Tensor grad_in(input.shape());

  for (std::size_t n = 0; n < g.batch; ++n) {
    const double* dy = upstream.data() + n * g.out_channels * cols;
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      double s = 0.0;
      for (std::size_t p = 0; p < cols; ++p) s += dy[o * cols + p];
      grad_b[o] += s;
    }
  }

  const ConstMatrixMap w(weights.data(), static_cast<Eigen::Index>(g.out_channels),
                         static_cast<Eigen::Index>(rows));
  MatrixMap dw_total(grad_w.data(), static_cast<Eigen::Index>(g.out_channels),
                     static_cast<Eigen::Index>(rows));

  // Per-sample weight gradients are reduced in sample order, one chunk of
  // `threads` samples at a time, so the sum does not depend on thread count.
  const std::size_t threads = static_cast<std::size_t>(std::max(1, omp_get_max_threads()));
  const std::size_t chunk = std::min(threads, g.batch);
  std::vector<RowMatrix> partial(chunk, RowMatrix(static_cast<Eigen::Index>(g.out_channels),
                                                  static_cast<Eigen::Index>(rows)));

  // Scratch is allocated once; fresh multi-megabyte buffers per sample cost
  // more in page faults than the GEMMs themselves.
  std::vector<std::vector<double>> cols_scratch(threads), dcols_scratch(threads);
  for (std::size_t base = 0; base < g.batch; base += chunk) {
    const std::size_t count = std::min(chunk, g.batch - base);
#pragma omp parallel
    {
      const auto tid = static_cast<std::size_t>(omp_get_thread_num());
      std::vector<double>& col = cols_scratch[tid];
      std::vector<double>& dcol = dcols_scratch[tid];
      if (!pointwise && col.empty()) {
        col.resize(rows * cols);
        dcol.resize(rows * cols);
      }
#pragma omp for schedule(static)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(count); ++i) {
        const std::size_t n = base + static_cast<std::size_t>(i);
        const double* src = input.data() + n * g.channels * g.in_volume();
        const double* col_ptr = src;
        if (!pointwise) {
          im2col(src, g, spec, col.data());
          col_ptr = col.data();
        }
        const ConstMatrixMap x(col_ptr, static_cast<Eigen::Index>(rows),
                               static_cast<Eigen::Index>(cols));
        const ConstMatrixMap dy(upstream.data() + n * g.out_channels * cols,
                                static_cast<Eigen::Index>(g.out_channels),
                                static_cast<Eigen::Index>(cols));
        partial[static_cast<std::size_t>(i)].noalias() = dy * x.transpose();

        double* dx = grad_in.data() + n * g.channels * g.in_volume();
        if (pointwise) {
          MatrixMap(dx, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols))
              .noalias() = w.transpose() * dy;
        } else {
          MatrixMap(dcol.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols))
              .noalias() = w.transpose() * dy;
          col2im(dcol.data(), g, spec, dx);
        }
      }
    }
    for (std::size_t i = 0; i < count; ++i) dw_total += partial[i];
  }
  LayerGrad result;
  result.param_grads.push_back(std::move(grad_w));
  result.param_grads.push_back(std::move(grad_b));
  result.input_grad = std::move(grad_in);
  return result;
}

namespace {
Tensor lift_2d(const Tensor& t) {
  return t.reshaped({t.dim(0), t.dim(1), 1, t.dim(2), t.dim(3)});
}
Tensor drop_2d(Tensor t) {
  return std::move(t).reshaped({t.dim(0), t.dim(1), t.dim(3), t.dim(4)});
}
void check_conv2d(const Tensor& input, const Tensor& weights, const Conv2dSpec& spec) {
  detail::require_rank(input, 4, "conv2d input [N, C, H, W]");
  if (weights.shape() != spec.weight_shape()) {
    throw ShapeError("conv2d: weights shape " + shape_string(weights.shape()) +
                     " does not match spec " + shape_string(spec.weight_shape()));
  }
}
}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      const Conv2dSpec& spec) {
  check_conv2d(input, weights, spec);
  return drop_2d(conv3d_forward(lift_2d(input), lift_2d(weights), bias, spec.as_3d()));
}

LayerGrad conv2d_backward(const Tensor& input, const Tensor& weights, const Conv2dSpec& spec,
                          const Tensor& upstream) {
  check_conv2d(input, weights, spec);
  detail::require_rank(upstream, 4, "conv2d upstream [N, O, H, W]");
  LayerGrad g = conv3d_backward(lift_2d(input), lift_2d(weights), spec.as_3d(), lift_2d(upstream));
  g.param_grads[0] = std::move(g.param_grads[0]).reshaped(weights.shape());
  g.input_grad = drop_2d(std::move(g.input_grad));
  return g;
}

}  // namespace resmotion::nn
