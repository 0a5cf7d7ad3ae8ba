#pragma once

// Finite-difference checks of every layer's backward pass, and the
// optimized-vs-loop comparison of the convolution and pooling kernels.
// Used by unit tests (few configurations) and the acceptance binary (many).

#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "resmotion/core/ops.hpp"
#include "resmotion/core/reference.hpp"
#include "resmotion/models/layers.hpp"
#include "test_support.hpp"

namespace resmotion::testing {

using nn::Mode;

struct LayerCheck {
  std::string layer;
  std::size_t configs = 0;
  double worst = 0.0;  // largest relative error seen
};

namespace detail {

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline nn::ConvSpec random_conv(std::mt19937_64& rng, const nn::Extent3& in, std::size_t c) {
  nn::ConvSpec s;
  s.in_channels = c;
  s.out_channels = pick(rng, 1, 3);
  for (std::size_t a = 0; a < 3; ++a) {
    s.padding[a] = pick(rng, 0, 1);
    s.kernel[a] = pick(rng, 1, std::min<std::size_t>(3, in[a] + 2 * s.padding[a]));
    s.stride[a] = pick(rng, 1, 2);
  }
  return s;
}

// Gradient of sum(w * layer(x)) w.r.t. x and every parameter of a Layer.
inline double check_layer(models::Layer& layer, Tensor x, std::mt19937_64& rng, Mode mode, double step) {
  models::Registry reg;
  layer.collect(reg);
  const Tensor y0 = layer.forward(x, mode);
  const Tensor w = random_tensor(y0.shape(), rng);
  for (auto* p : reg.params) p->grad.fill(0.0);
  layer.forward(x, mode);
  const Tensor dx = layer.backward(w);
  auto f = [&] { return project(layer.forward(x, mode), w); };
  double worst = max_relative_error(dx, numeric_gradient(x, f, step));
  for (auto* p : reg.params) {
    const Tensor analytic = p->grad;
    worst = std::max(worst, max_relative_error(analytic, numeric_gradient(p->value, f, step)));
  }
  return worst;
}

}  // namespace detail

// Runs `configs` random configurations of each layer type.
inline std::vector<LayerCheck> run_gradient_suite(std::size_t configs, std::uint64_t seed) {
  using detail::pick;
  std::mt19937_64 rng(seed);
  std::vector<LayerCheck> out;
  auto run = [&](const std::string& name, const std::function<double()>& one) {
    LayerCheck c{name, 0, 0.0};
    for (std::size_t i = 0; i < configs; ++i) {
      c.worst = std::max(c.worst, one());
      ++c.configs;
    }
    out.push_back(c);
  };

  run("conv3d", [&] {
    const nn::Extent3 e{pick(rng, 1, 4), pick(rng, 1, 4), pick(rng, 1, 4)};
    const std::size_t n = pick(rng, 1, 2), c = pick(rng, 1, 3);
    const nn::ConvSpec s = detail::random_conv(rng, e, c);
    Tensor x = random_tensor({n, c, e[0], e[1], e[2]}, rng);
    Tensor wt = random_tensor(s.weight_shape(), rng);
    Tensor b = random_tensor({s.out_channels}, rng);
    const Tensor proj = random_tensor(nn::conv3d_forward(x, wt, b, s).shape(), rng);
    const auto g = nn::conv3d_backward(x, wt, s, proj);
    auto f = [&] { return project(nn::conv3d_forward(x, wt, b, s), proj); };
    return std::max({max_relative_error(g.input_grad, numeric_gradient(x, f)),
                     max_relative_error(g.param_grads[0], numeric_gradient(wt, f)),
                     max_relative_error(g.param_grads[1], numeric_gradient(b, f))});
  });

  run("conv2d", [&] {
    const std::size_t h = pick(rng, 1, 5), wd = pick(rng, 1, 5), n = pick(rng, 1, 2), c = pick(rng, 1, 3);
    const nn::ConvSpec s3 = detail::random_conv(rng, {1, h, wd}, c);
    nn::Conv2dSpec s{{s3.kernel[1], s3.kernel[2]}, {s3.stride[1], s3.stride[2]},
                     {s3.padding[1], s3.padding[2]}, c, s3.out_channels};
    Tensor x = random_tensor({n, c, h, wd}, rng);
    Tensor wt = random_tensor(s.weight_shape(), rng);
    Tensor b = random_tensor({s.out_channels}, rng);
    const Tensor proj = random_tensor(nn::conv2d_forward(x, wt, b, s).shape(), rng);
    const auto g = nn::conv2d_backward(x, wt, s, proj);
    auto f = [&] { return project(nn::conv2d_forward(x, wt, b, s), proj); };
    return std::max({max_relative_error(g.input_grad, numeric_gradient(x, f)),
                     max_relative_error(g.param_grads[0], numeric_gradient(wt, f)),
                     max_relative_error(g.param_grads[1], numeric_gradient(b, f))});
  });

  run("maxpool3d", [&] {
    nn::Extent3 e{pick(rng, 1, 4), pick(rng, 1, 4), pick(rng, 1, 4)}, win{}, str{};
    for (std::size_t a = 0; a < 3; ++a) {
      win[a] = pick(rng, 1, std::min<std::size_t>(2, e[a]));
      str[a] = pick(rng, 1, 2);
    }
    Tensor x = distinct_values({pick(rng, 1, 2), pick(rng, 1, 2), e[0], e[1], e[2]}, rng);
    const Tensor proj = random_tensor(nn::maxpool3d_forward(x, win, str).shape(), rng);
    const auto g = nn::maxpool3d_backward(x, win, str, proj);
    auto f = [&] { return project(nn::maxpool3d_forward(x, win, str), proj); };
    return max_relative_error(g.input_grad, numeric_gradient(x, f));
  });

  for (auto kind : {nn::Activation::relu, nn::Activation::elu}) {
    run(std::string(nn::to_string(kind)), [&, kind] {
      Tensor x = away_from_zero({pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 5)}, rng);
      const Tensor proj = random_tensor(x.shape(), rng);
      const Tensor dx = nn::activation_backward(x, proj, kind);
      auto f = [&] { return project(nn::activation_forward(x, kind), proj); };
      return max_relative_error(dx, numeric_gradient(x, f));
    });
  }

  for (auto mode : {Mode::train, Mode::eval}) {
    run(mode == Mode::train ? "batchnorm_train" : "batchnorm_eval", [&, mode] {
      const std::size_t c = pick(rng, 1, 3);
      // At least 16 values per channel: with only a handful the batch statistics
      // make the map so curved that step 1e-3 truncation alone exceeds 1e-4.
      const Shape shape{pick(rng, 2, 3), c, pick(rng, 2, 3), pick(rng, 2, 4), pick(rng, 2, 4)};
      Tensor x = random_tensor(shape, rng);
      nn::BatchNormParams p{random_tensor({c}, rng, 0.5, 1.5), random_tensor({c}, rng)};
      nn::RunningStats stats{Tensor({c}), Tensor({c}), false};
      nn::batchnorm_forward(random_tensor(shape, rng), p, stats, Mode::train);
      const Tensor proj = random_tensor(shape, rng);
      const auto g = nn::batchnorm_backward(x, p, stats, mode, proj);
      auto f = [&] {
        nn::RunningStats scratch = stats;
        return project(nn::batchnorm_forward(x, p, scratch, mode), proj);
      };
      return std::max({max_relative_error(g.input_grad, numeric_gradient(x, f)),
                       max_relative_error(g.param_grads[0], numeric_gradient(p.gamma, f)),
                       max_relative_error(g.param_grads[1], numeric_gradient(p.beta, f))});
    });
  }

  run("linear", [&] {
    const std::size_t n = pick(rng, 1, 3), in = pick(rng, 1, 6), o = pick(rng, 1, 4);
    Tensor x = random_tensor({n, in}, rng), wt = random_tensor({o, in}, rng), b = random_tensor({o}, rng);
    const Tensor proj = random_tensor({n, o}, rng);
    const auto g = nn::linear_backward(x, wt, proj);
    auto f = [&] { return project(nn::linear_forward(x, wt, b), proj); };
    return std::max({max_relative_error(g.input_grad, numeric_gradient(x, f)),
                     max_relative_error(g.param_grads[0], numeric_gradient(wt, f)),
                     max_relative_error(g.param_grads[1], numeric_gradient(b, f))});
  });

  run("global_avgpool", [&] {
    Tensor x = random_tensor({pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3)}, rng);
    const Tensor proj = random_tensor({x.dim(0), x.dim(1)}, rng);
    const Tensor dx = nn::global_avgpool3d_backward(x.shape(), proj);
    auto f = [&] { return project(nn::global_avgpool3d(x), proj); };
    return max_relative_error(dx, numeric_gradient(x, f));
  });

  for (bool signed_diff : {false, true}) {
    run(signed_diff ? "temporal_diff_signed" : "temporal_diff_abs", [&, signed_diff] {
      // Consecutive frames differ by at least 0.05, away from the |.| kink.
      const Shape shape{pick(rng, 1, 2), pick(rng, 1, 2), pick(rng, 2, 4), pick(rng, 1, 3), pick(rng, 1, 3)};
      const Tensor steps = away_from_zero(shape, rng);
      Tensor x(shape);
      const std::size_t plane = shape[3] * shape[4];
      for (std::size_t nc = 0; nc < shape[0] * shape[1]; ++nc) {
        for (std::size_t t = 0; t < shape[2]; ++t) {
          for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t at = (nc * shape[2] + t) * plane + i;
            x[at] = t == 0 ? steps[at] : x[at - plane] + steps[at];
          }
        }
      }
      const Tensor proj = random_tensor(nn::temporal_difference(x, signed_diff).shape(), rng);
      const Tensor dx = nn::temporal_difference_backward(x, proj, signed_diff);
      auto f = [&] { return project(nn::temporal_difference(x, signed_diff), proj); };
      return max_relative_error(dx, numeric_gradient(x, f));
    });
  }

  run("softmax_cross_entropy", [&] {
    const std::size_t n = pick(rng, 1, 4), k = pick(rng, 2, 6);
    Tensor x = random_tensor({n, k}, rng, -3.0, 3.0);
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(pick(rng, 0, k - 1));
    const auto loss = nn::cross_entropy_loss(x, labels);
    auto f = [&] { return nn::cross_entropy_loss(x, labels).loss; };
    return max_relative_error(loss.grad, numeric_gradient(x, f));
  });

  return out;
}

// Residual blocks as a whole (train mode). Internal pre-activations are not
// controlled, so some land within one step of the ELU curvature jump or a
// pooling tie; callers pick a step small enough for that to be rare.
inline std::vector<LayerCheck> run_block_suite(std::size_t configs, std::uint64_t seed, double step) {
  using detail::pick;
  std::mt19937_64 rng(seed);
  std::vector<LayerCheck> out;
  auto run = [&](const std::string& name, const std::function<double()>& one) {
    LayerCheck c{name, 0, 0.0};
    for (std::size_t i = 0; i < configs; ++i) {
      c.worst = std::max(c.worst, one());
      ++c.configs;
    }
    out.push_back(c);
  };
  struct BlockKind {
    const char* name;
    bool downsample, pool, flat;
  };
  for (const BlockKind k : {BlockKind{"residual_block", false, false, false},
                            BlockKind{"residual_block_stride", true, false, false},
                            BlockKind{"residual_block_pool", true, true, false},
                            BlockKind{"residual_block_2d", true, false, true}}) {
    run(k.name, [&, k] {
      models::Initializer init(rng());
      models::BlockOptions o;
      o.in_channels = pick(rng, 1, 2);
      o.out_channels = k.downsample ? pick(rng, 1, 3) : o.in_channels;
      o.downsample = k.downsample;
      o.pool_variant = k.pool;
      o.spatial_only = k.flat;
      o.activation = nn::Activation::elu;
      models::ResidualBlock block("b", o, init);
      const Shape shape = k.flat ? Shape{2, o.in_channels, pick(rng, 2, 4), pick(rng, 2, 4)}
                                 : Shape{2, o.in_channels, pick(rng, 2, 3), pick(rng, 2, 4), pick(rng, 2, 4)};
      return detail::check_layer(block, random_tensor(shape, rng), rng, Mode::train, step);
    });
  }
  return out;
}

struct OracleCheck {
  std::string kernel;
  std::size_t configs = 0;
  double max_abs_diff = 0.0;
};

// Optimized kernels against the nested-loop oracle on every input extent
// (T, H, W) in [1, max_extent]^3, with random kernels, strides and padding.
inline std::vector<OracleCheck> run_oracle_suite(std::size_t max_extent, std::uint64_t seed) {
  using detail::pick;
  std::mt19937_64 rng(seed);
  OracleCheck c3{"conv3d", 0, 0.0}, c2{"conv2d", 0, 0.0}, mp{"maxpool3d", 0, 0.0}, c3b{"conv3d_backward", 0, 0.0},
      mpb{"maxpool3d_backward", 0, 0.0};
  for (std::size_t t = 1; t <= max_extent; ++t) {
    for (std::size_t h = 1; h <= max_extent; ++h) {
      for (std::size_t w = 1; w <= max_extent; ++w) {
        const nn::Extent3 e{t, h, w};
        const std::size_t n = pick(rng, 1, 2), c = pick(rng, 1, 3);
        nn::ConvSpec s;
        s.in_channels = c;
        s.out_channels = pick(rng, 1, 3);
        for (std::size_t a = 0; a < 3; ++a) {
          s.padding[a] = pick(rng, 0, 2);
          s.kernel[a] = pick(rng, 1, std::min<std::size_t>(4, e[a] + 2 * s.padding[a]));
          s.stride[a] = pick(rng, 1, 3);
        }
        const Tensor x = random_tensor({n, c, t, h, w}, rng);
        const Tensor wt = random_tensor(s.weight_shape(), rng);
        const Tensor b = random_tensor({s.out_channels}, rng);
        const Tensor y = nn::conv3d_forward(x, wt, b, s);
        c3.max_abs_diff = std::max(c3.max_abs_diff, max_abs_diff(y, nn::reference::conv3d_forward(x, wt, b, s)));
        ++c3.configs;
        const Tensor up = random_tensor(y.shape(), rng);
        const auto g = nn::conv3d_backward(x, wt, s, up);
        const auto gr = nn::reference::conv3d_backward(x, wt, s, up);
        c3b.max_abs_diff = std::max({c3b.max_abs_diff, max_abs_diff(g.input_grad, gr.input_grad),
                                     max_abs_diff(g.param_grads[0], gr.param_grads[0]),
                                     max_abs_diff(g.param_grads[1], gr.param_grads[1])});
        ++c3b.configs;

        nn::Conv2dSpec s2{{s.kernel[1], s.kernel[2]}, {s.stride[1], s.stride[2]}, {s.padding[1], s.padding[2]},
                          c, s.out_channels};
        const Tensor x2 = random_tensor({n, c, h, w}, rng);
        const Tensor w2 = random_tensor(s2.weight_shape(), rng);
        c2.max_abs_diff = std::max(c2.max_abs_diff, max_abs_diff(nn::conv2d_forward(x2, w2, b, s2),
                                                                 nn::reference::conv2d_forward(x2, w2, b, s2)));
        ++c2.configs;

        nn::Extent3 win{}, str{};
        for (std::size_t a = 0; a < 3; ++a) {
          win[a] = pick(rng, 1, std::min<std::size_t>(3, e[a]));
          str[a] = pick(rng, 1, 3);
        }
        // Coarse values so windows contain ties and the tie rule is compared too.
        Tensor xp = random_tensor({n, c, t, h, w}, rng);
        for (auto& v : xp.values()) v = std::round(v * 3.0);
        const Tensor yp = nn::maxpool3d_forward(xp, win, str);
        mp.max_abs_diff = std::max(mp.max_abs_diff, max_abs_diff(yp, nn::reference::maxpool3d_forward(xp, win, str)));
        ++mp.configs;
        const Tensor upp = random_tensor(yp.shape(), rng);
        mpb.max_abs_diff = std::max(mpb.max_abs_diff,
                                    max_abs_diff(nn::maxpool3d_backward(xp, win, str, upp).input_grad,
                                                 nn::reference::maxpool3d_backward(xp, win, str, upp).input_grad));
        ++mpb.configs;
      }
    }
  }
  return {c3, c2, mp, c3b, mpb};
}

}  // namespace resmotion::testing
