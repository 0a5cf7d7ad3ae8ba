#pragma once

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "resmotion/framestore/framestore.hpp"
#include "test_support.hpp"

namespace resmotion::testing {

// Videos held as [F, H, W, 3] tensors.
class MemorySource final : public framestore::FrameSource {
 public:
  void add(std::string id, int label, Tensor frames) {
    framestore::VideoRecord r;
    r.id = std::move(id);
    r.label = label;
    r.frame_count = frames.dim(0);
    records_.push_back(r);
    videos_.push_back(std::move(frames));
  }
  const std::vector<framestore::VideoRecord>& records() const override { return records_; }
  Tensor load_frames(std::size_t index, std::size_t begin, std::size_t end) const override {
    const Tensor& v = videos_.at(index);
    if (begin >= end || end > v.dim(0)) throw std::out_of_range("frame range");
    const std::size_t per = v.size() / v.dim(0);
    Tensor out({end - begin, v.dim(1), v.dim(2), v.dim(3)});
    std::copy(v.data() + begin * per, v.data() + end * per, out.data());
    return out;
  }

 private:
  std::vector<framestore::VideoRecord> records_;
  std::vector<Tensor> videos_;
};

// Random videos with pixel values in [0, 1].
inline MemorySource random_videos(std::size_t count, std::size_t frames, std::size_t h, std::size_t w,
                                  int classes, std::mt19937_64& rng) {
  MemorySource s;
  for (std::size_t i = 0; i < count; ++i) {
    s.add("v" + std::to_string(i), static_cast<int>(i % classes), random_tensor({frames, h, w, 3}, rng, 0.0, 1.0));
  }
  return s;
}

}  // namespace resmotion::testing
