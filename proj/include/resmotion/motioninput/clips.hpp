#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "resmotion/core/tensor.hpp"
#include "resmotion/framestore/framestore.hpp"

namespace resmotion::motioninput {

using Rng = std::mt19937_64;
using framestore::FrameSource;

enum class InputMode { rgb, residual };
std::string_view to_string(InputMode mode);
InputMode parse_input_mode(std::string_view name);

// Stacked-frame input of the motion path. Resize happens before cropping;
// width 170 / height 128 with a 112 x 112 crop and 16 frames by default.
struct ClipSpec {
  std::size_t frames = 16;
  std::size_t crop_height = 112;
  std::size_t crop_width = 112;
  std::size_t resize_width = 170;
  std::size_t resize_height = 128;
  InputMode mode = InputMode::residual;
  bool train_augment = true;
  // Keeps the sign of frame differences; ablation only.
  bool signed_residual = false;

  // Frames read from the source per clip: T, or T + 1 for residual input.
  std::size_t source_frames() const { return mode == InputMode::residual ? frames + 1 : frames; }
  void validate() const;
};

// Single-frame input of the appearance path.
struct FrameSpec {
  std::size_t crop_height = 224;
  std::size_t crop_width = 224;
  std::size_t resize_width = 256;
  std::size_t resize_height = 256;
  bool train_augment = true;

  void validate() const;
};

struct AugmentLog {
  std::size_t crop_y = 0;
  std::size_t crop_x = 0;
  bool flipped = false;
  friend bool operator==(const AugmentLog&, const AugmentLog&) = default;
};

struct SampledClip {
  Tensor data;  // [T, H, W, C] for clips, [H, W, C] for single frames
  std::string video_id;
  std::size_t start_frame = 0;
  AugmentLog augment;
  friend bool operator==(const SampledClip&, const SampledClip&) = default;
};

// out[t] = |frames[t] - frames[t + 1]| for frames [T + 1, H, W, C].
Tensor residual_clip(const Tensor& frames, bool signed_diff = false);

// Bilinear resize of an [H, W, C] frame; pixel centers sit at (i + 0.5) / N.
Tensor resize_bilinear(const Tensor& frame, std::size_t out_height, std::size_t out_width);
// Applies resize_bilinear to each frame of [T, H, W, C].
Tensor resize_clip(const Tensor& clip, std::size_t out_height, std::size_t out_width);

// Spatial crop / horizontal mirror of [T, H, W, C] or [H, W, C].
Tensor crop(const Tensor& data, std::size_t y, std::size_t x, std::size_t height,
            std::size_t width);
Tensor flip_horizontal(const Tensor& data);

// Loads `count` frames starting at `start`; frames past the end of a short
// video repeat the last frame.
Tensor load_padded(const FrameSource& source, std::size_t index, std::size_t start,
                   std::size_t count);

// Training clip: random start in [0, frame_count - T_src], resize, residual
// transform, random crop, flip with probability 0.5 (RNG draws in that order).
SampledClip sample_training_clip(const FrameSource& source, std::size_t index,
                                 const ClipSpec& spec, Rng& rng);

// Evenly spaced starts round(k * R / (n - 1)) over the valid range [0, R];
// a single clip sits at round(R / 2). Rounding is half away from zero.
std::vector<std::size_t> uniform_starts(std::size_t frame_count, std::size_t source_frames,
                                        std::size_t num_clips);

// Test clips: uniform starts, center crop, no flip. Consumes no randomness.
std::vector<SampledClip> sample_test_clips(const FrameSource& source, std::size_t index,
                                           const ClipSpec& spec, std::size_t num_clips = 5);

// One uniformly chosen frame, resized, randomly cropped and flipped.
SampledClip sample_training_frame(const FrameSource& source, std::size_t index,
                                  const FrameSpec& spec, Rng& rng);

// `num_frames` evenly spaced frames with a center crop.
std::vector<SampledClip> sample_test_frames(const FrameSource& source, std::size_t index,
                                            const FrameSpec& spec, std::size_t num_frames = 5);

}  // namespace resmotion::motioninput
