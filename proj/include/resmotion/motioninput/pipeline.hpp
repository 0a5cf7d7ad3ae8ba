#pragma once

#include <variant>

#include "resmotion/motioninput/clips.hpp"

namespace resmotion::motioninput {

// Network-ready samples for one path: stacked clips for the motion path
// ([C, T, H, W]) or single frames for the appearance path ([C, H, W]).
class InputPipeline {
 public:
  explicit InputPipeline(ClipSpec clip) : spec_(std::move(clip)) {}
  explicit InputPipeline(FrameSpec frame) : spec_(std::move(frame)) {}

  bool is_motion() const { return std::holds_alternative<ClipSpec>(spec_); }
  const ClipSpec& clip_spec() const { return std::get<ClipSpec>(spec_); }
  const FrameSpec& frame_spec() const { return std::get<FrameSpec>(spec_); }

  // Per-sample network input shape (channels first).
  Shape sample_shape() const;

  Tensor training_input(const FrameSource& source, std::size_t index, Rng& rng) const;
  std::vector<Tensor> test_inputs(const FrameSource& source, std::size_t index,
                                  std::size_t num_clips) const;

 private:
  std::variant<ClipSpec, FrameSpec> spec_;
};

}  // namespace resmotion::motioninput
