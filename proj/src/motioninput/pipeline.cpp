#include "resmotion/motioninput/pipeline.hpp"

namespace resmotion::motioninput {

Shape InputPipeline::sample_shape() const {
  if (is_motion()) {
    const auto& s = clip_spec();
    return {3, s.frames, s.crop_height, s.crop_width};
  }
  const auto& s = frame_spec();
  return {3, s.crop_height, s.crop_width};
}

Tensor InputPipeline::training_input(const FrameSource& source, std::size_t index, Rng& rng) const {
  if (is_motion()) return channels_first(sample_training_clip(source, index, clip_spec(), rng).data);
  return channels_first(sample_training_frame(source, index, frame_spec(), rng).data);
}

std::vector<Tensor> InputPipeline::test_inputs(const FrameSource& source, std::size_t index,
                                               std::size_t num_clips) const {
  std::vector<SampledClip> samples = is_motion()
                                         ? sample_test_clips(source, index, clip_spec(), num_clips)
                                         : sample_test_frames(source, index, frame_spec(), num_clips);
  std::vector<Tensor> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(channels_first(s.data));
  return out;
}

}  // namespace resmotion::motioninput
