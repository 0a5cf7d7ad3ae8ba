#include <cmath>
#include <string>

#include "resmotion/core/errors.hpp"
#include "resmotion/core/ops.hpp"
#include "shape_checks.hpp"

namespace resmotion::nn {

std::string_view to_string(Activation kind) {
  return kind == Activation::relu ? "relu" : "elu";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "elu") return Activation::elu;
  throw ConfigError("unknown activation '" + std::string(name) + "' (expected relu or elu)");
}

Tensor activation_forward(const Tensor& x, Activation kind) {
  Tensor y(x.shape());
  const double* src = x.data();
  double* dst = y.data();
  const std::size_t n = x.size();
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
  } else {
    for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] > 0.0 ? src[i] : std::expm1(src[i]);
  }
  return y;
}

Tensor activation_backward(const Tensor& x, const Tensor& upstream, Activation kind) {
  detail::require_shape(upstream, x.shape(), "activation backward upstream");
  Tensor g(x.shape());
  const double* src = x.data();
  const double* dy = upstream.data();
  double* dx = g.data();
  const std::size_t n = x.size();
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < n; ++i) dx[i] = src[i] > 0.0 ? dy[i] : 0.0;
  } else {
    for (std::size_t i = 0; i < n; ++i) dx[i] = src[i] > 0.0 ? dy[i] : dy[i] * std::exp(src[i]);
  }
  return g;
}

Tensor temporal_difference(const Tensor& x, bool signed_diff) {
  detail::require_rank(x, 5, "temporal_difference input [N, C, T, H, W]");
  const std::size_t frames = x.dim(2);
  if (frames < 2) {
    throw ShapeError("temporal_difference: axis T has extent " + std::to_string(frames) +
                     ", need at least 2");
  }
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t frame_size = x.dim(3) * x.dim(4);
  Tensor y({x.dim(0), x.dim(1), frames - 1, x.dim(3), x.dim(4)});
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.data() + p * frames * frame_size;
    double* dst = y.data() + p * (frames - 1) * frame_size;
    for (std::size_t i = 0; i < (frames - 1) * frame_size; ++i) {
      const double d = src[i] - src[i + frame_size];
      dst[i] = signed_diff ? d : std::abs(d);
    }
  }
  return y;
}

Tensor temporal_difference_backward(const Tensor& x, const Tensor& upstream, bool signed_diff) {
  detail::require_rank(x, 5, "temporal_difference input [N, C, T, H, W]");
  const std::size_t frames = x.dim(2);
  if (frames < 2) throw ShapeError("temporal_difference backward: axis T extent < 2");
  detail::require_shape(upstream, {x.dim(0), x.dim(1), frames - 1, x.dim(3), x.dim(4)},
                        "temporal_difference upstream");
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t frame_size = x.dim(3) * x.dim(4);
  Tensor g(x.shape());
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.data() + p * frames * frame_size;
    const double* dy = upstream.data() + p * (frames - 1) * frame_size;
    double* dx = g.data() + p * frames * frame_size;
    for (std::size_t i = 0; i < (frames - 1) * frame_size; ++i) {
      const double d = src[i] - src[i + frame_size];
      // Subgradient 0 at d == 0.
      const double s = signed_diff ? 1.0 : (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
      dx[i] += s * dy[i];
      dx[i + frame_size] -= s * dy[i];
    }
  }
  return g;
}

Tensor softmax(const Tensor& logits) {
  detail::require_rank(logits, 2, "softmax logits [N, K]");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor p(logits.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const double* z = logits.data() + r * k;
    double* out = p.data() + r * k;
    double peak = z[0];
    for (std::size_t j = 1; j < k; ++j) peak = std::max(peak, z[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += out[j] = std::exp(z[j] - peak);
    for (std::size_t j = 0; j < k; ++j) out[j] /= total;
  }
  return p;
}

LossResult cross_entropy_loss(const Tensor& logits, std::span<const int> labels) {
  detail::require_rank(logits, 2, "cross_entropy logits [N, K]");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(n));
  }
  LossResult r;
  r.probs = softmax(logits);
  r.grad = r.probs;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(label) +
                              " outside [0, " + std::to_string(k) + ")");
    }
    const double* z = logits.data() + i * k;
    double peak = z[0];
    for (std::size_t j = 1; j < k; ++j) peak = std::max(peak, z[j]);
    double total_exp = 0.0;
    for (std::size_t j = 0; j < k; ++j) total_exp += std::exp(z[j] - peak);
    // log-sum-exp form stays finite for large logit gaps.
    total += std::log(total_exp) + peak - z[label];
    r.grad[i * k + static_cast<std::size_t>(label)] -= 1.0;
  }
  r.loss = total / static_cast<double>(n);
  r.grad *= 1.0 / static_cast<double>(n);
  return r;
}

Tensor linear_forward(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  detail::require_rank(x, 2, "linear input [N, F]");
  detail::require_rank(weights, 2, "linear weights [O, F]");
  if (weights.dim(1) != x.dim(1)) {
    throw ShapeError("linear: input has " + std::to_string(x.dim(1)) + " features, weights expect " +
                     std::to_string(weights.dim(1)));
  }
  detail::require_shape(bias, {weights.dim(0)}, "linear bias");
  const std::size_t n = x.dim(0), f = x.dim(1), o = weights.dim(0);
  Tensor y({n, o});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < o; ++j) {
      double s = bias[j];
      for (std::size_t q = 0; q < f; ++q) s += x[i * f + q] * weights[j * f + q];
      y[i * o + j] = s;
    }
  }
  return y;
}

LayerGrad linear_backward(const Tensor& x, const Tensor& weights, const Tensor& upstream) {
  detail::require_rank(x, 2, "linear input [N, F]");
  const std::size_t n = x.dim(0), f = x.dim(1), o = weights.dim(0);
  detail::require_shape(weights, {o, f}, "linear weights");
  detail::require_shape(upstream, {n, o}, "linear upstream");
  Tensor dw(weights.shape()), db({o}), dx(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < o; ++j) {
      const double g = upstream[i * o + j];
      db[j] += g;
      for (std::size_t q = 0; q < f; ++q) {
        dw[j * f + q] += g * x[i * f + q];
        dx[i * f + q] += g * weights[j * f + q];
      }
    }
  }
  return LayerGrad{{std::move(dw), std::move(db)}, std::move(dx)};
}

}  // namespace resmotion::nn
