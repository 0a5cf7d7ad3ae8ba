#include <cmath>
#include <vector>

#include "resmotion/core/errors.hpp"
#include "resmotion/core/ops.hpp"
#include "shape_checks.hpp"

namespace resmotion::nn {
namespace {

struct Layout {
  std::size_t batch, channels, inner;
  std::size_t count() const { return batch * inner; }
  std::size_t at(std::size_t n, std::size_t c) const { return (n * channels + c) * inner; }
};

Layout check_batchnorm(const Tensor& x, const BatchNormParams& params) {
  if (x.rank() < 2) throw ShapeError("batchnorm: expected [N, C, ...], got " + shape_string(x.shape()));
  const std::size_t c = x.dim(1);
  detail::require_shape(params.gamma, {c}, "batchnorm gamma (axis C)");
  detail::require_shape(params.beta, {c}, "batchnorm beta (axis C)");
  return Layout{x.dim(0), c, x.size() / (x.dim(0) * c)};
}

struct Moments {
  std::vector<double> mean, var;  // biased variance
};

Moments batch_moments(const Tensor& x, const Layout& l) {
  Moments m{std::vector<double>(l.channels), std::vector<double>(l.channels)};
  const double count = static_cast<double>(l.count());
  for (std::size_t c = 0; c < l.channels; ++c) {
    double s = 0.0;
    for (std::size_t n = 0; n < l.batch; ++n) {
      const double* src = x.data() + l.at(n, c);
      for (std::size_t i = 0; i < l.inner; ++i) s += src[i];
    }
    const double mean = s / count;
    double ss = 0.0;
    for (std::size_t n = 0; n < l.batch; ++n) {
      const double* src = x.data() + l.at(n, c);
      for (std::size_t i = 0; i < l.inner; ++i) ss += (src[i] - mean) * (src[i] - mean);
    }
    m.mean[c] = mean;
    m.var[c] = ss / count;
  }
  return m;
}

void require_stats(const RunningStats& stats, const Layout& l) {
  if (!stats.initialized) {
    throw std::logic_error("batchnorm: eval mode requested before any running statistics exist");
  }
  detail::require_shape(stats.mean, {l.channels}, "batchnorm running mean");
  detail::require_shape(stats.var, {l.channels}, "batchnorm running var");
}

}  // namespace

Tensor batchnorm_forward(const Tensor& x, const BatchNormParams& params, RunningStats& stats,
                         Mode mode) {
  const Layout l = check_batchnorm(x, params);
  std::vector<double> mean(l.channels), inv_std(l.channels);
  if (mode == Mode::train) {
    const Moments m = batch_moments(x, l);
    const double count = static_cast<double>(l.count());
    const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
    if (!stats.initialized) {
      stats.mean = Tensor({l.channels});
      stats.var = Tensor({l.channels});
    }
    for (std::size_t c = 0; c < l.channels; ++c) {
      mean[c] = m.mean[c];
      inv_std[c] = 1.0 / std::sqrt(m.var[c] + kBatchNormEps);
      if (stats.initialized) {
        stats.mean[c] = kBatchNormMomentum * stats.mean[c] + (1.0 - kBatchNormMomentum) * m.mean[c];
        stats.var[c] =
            kBatchNormMomentum * stats.var[c] + (1.0 - kBatchNormMomentum) * m.var[c] * unbias;
      } else {
        stats.mean[c] = m.mean[c];
        stats.var[c] = m.var[c] * unbias;
      }
    }
    stats.initialized = true;
  } else {
    require_stats(stats, l);
    for (std::size_t c = 0; c < l.channels; ++c) {
      mean[c] = stats.mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.var[c] + kBatchNormEps);
    }
  }
  Tensor y(x.shape());
  for (std::size_t n = 0; n < l.batch; ++n) {
    for (std::size_t c = 0; c < l.channels; ++c) {
      const double scale = params.gamma[c] * inv_std[c];
      const double shift = params.beta[c] - mean[c] * scale;
      const double* src = x.data() + l.at(n, c);
      double* dst = y.data() + l.at(n, c);
      for (std::size_t i = 0; i < l.inner; ++i) dst[i] = src[i] * scale + shift;
    }
  }
  return y;
}

LayerGrad batchnorm_backward(const Tensor& x, const BatchNormParams& params,
                             const RunningStats& stats, Mode mode, const Tensor& upstream) {
  const Layout l = check_batchnorm(x, params);
  detail::require_shape(upstream, x.shape(), "batchnorm upstream");
  Tensor dgamma({l.channels}), dbeta({l.channels}), dx(x.shape());

  std::vector<double> mean(l.channels), inv_std(l.channels);
  if (mode == Mode::train) {
    const Moments m = batch_moments(x, l);
    for (std::size_t c = 0; c < l.channels; ++c) {
      mean[c] = m.mean[c];
      inv_std[c] = 1.0 / std::sqrt(m.var[c] + kBatchNormEps);
    }
  } else {
    require_stats(stats, l);
    for (std::size_t c = 0; c < l.channels; ++c) {
      mean[c] = stats.mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.var[c] + kBatchNormEps);
    }
  }

  const double count = static_cast<double>(l.count());
  for (std::size_t c = 0; c < l.channels; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < l.batch; ++n) {
      const double* src = x.data() + l.at(n, c);
      const double* dy = upstream.data() + l.at(n, c);
      for (std::size_t i = 0; i < l.inner; ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += dy[i] * (src[i] - mean[c]) * inv_std[c];
      }
    }
    dgamma[c] = sum_dy_xhat;
    dbeta[c] = sum_dy;
    const double g = params.gamma[c] * inv_std[c];
    for (std::size_t n = 0; n < l.batch; ++n) {
      const double* src = x.data() + l.at(n, c);
      const double* dy = upstream.data() + l.at(n, c);
      double* out = dx.data() + l.at(n, c);
      if (mode == Mode::train) {
        for (std::size_t i = 0; i < l.inner; ++i) {
          const double xhat = (src[i] - mean[c]) * inv_std[c];
          out[i] = g * (dy[i] - sum_dy / count - xhat * sum_dy_xhat / count);
        }
      } else {
        for (std::size_t i = 0; i < l.inner; ++i) out[i] = g * dy[i];
      }
    }
  }
  return LayerGrad{{std::move(dgamma), std::move(dbeta)}, std::move(dx)};
}

}  // namespace resmotion::nn
