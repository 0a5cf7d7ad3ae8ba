#pragma once

#include <string>

#include "resmotion/core/errors.hpp"
#include "resmotion/core/tensor.hpp"

namespace resmotion::nn::detail {

inline void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

inline void require_shape(const Tensor& t, const Shape& shape, const char* what) {
  if (t.shape() != shape) {
    throw ShapeError(std::string(what) + ": expected " + shape_string(shape) + ", got " +
                     shape_string(t.shape()));
  }
}

}  // namespace resmotion::nn::detail
