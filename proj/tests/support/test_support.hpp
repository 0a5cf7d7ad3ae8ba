#pragma once

// Helpers shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "resmotion/core/tensor.hpp"

namespace resmotion::testing {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.values()) v = d(rng);
  return t;
}

// Values whose magnitude is at least `margin`, so finite differences with a
// smaller step never cross a kink at zero.
inline Tensor away_from_zero(const Shape& shape, std::mt19937_64& rng, double margin = 0.05) {
  Tensor t(shape);
  std::uniform_real_distribution<double> mag(margin, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : t.values()) v = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

// A random permutation of evenly spaced values: all entries differ by at
// least `gap`, which keeps max-pool argmaxes stable under perturbation.
inline Tensor distinct_values(const Shape& shape, std::mt19937_64& rng, double gap = 0.01) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = gap * static_cast<double>(i);
  std::shuffle(t.values().begin(), t.values().end(), rng);
  return t;
}

// Central differences of a scalar function w.r.t. every entry of `x`.
inline Tensor numeric_gradient(Tensor& x, const std::function<double()>& f, double step = 1e-3) {
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + step;
    const double up = f();
    x[i] = keep - step;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

// Relative error of a whole gradient tensor in the max norm:
// max_i |a_i - n_i| / max_i max(|a_i|, |n_i|). Entries that cancel to almost
// zero are judged against the tensor's scale instead of their own magnitude,
// where step-1e-3 truncation error is unavoidable. A tensor whose scale is
// below 1e-6 (an exactly-zero gradient) matches when every |a - n| < 1e-9.
inline double max_relative_error(const Tensor& analytic, const Tensor& numeric) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  if (scale < 1e-6) return diff < 1e-9 ? 0.0 : 1.0;
  return diff / scale;
}

// sum(weights * y): a scalar projection whose gradient w.r.t. y is `weights`.
inline double project(const Tensor& y, const Tensor& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * weights[i];
  return s;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 names(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("resmotion_" + tag + "_" + std::to_string(names()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace resmotion::testing
