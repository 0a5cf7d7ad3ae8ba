#include "resmotion/motioninput/clips.hpp"

#include <algorithm>
#include <cmath>

#include "resmotion/core/errors.hpp"

namespace resmotion::motioninput {

std::string_view to_string(InputMode mode) {
  return mode == InputMode::rgb ? "rgb" : "residual";
}

InputMode parse_input_mode(std::string_view name) {
  if (name == "rgb") return InputMode::rgb;
  if (name == "residual") return InputMode::residual;
  throw ConfigError("unknown input mode '" + std::string(name) + "' (expected rgb or residual)");
}

void ClipSpec::validate() const {
  if (frames < 1) throw ConfigError("clip: frames must be >= 1");
  if (crop_height < 1 || crop_width < 1) throw ConfigError("clip: crop must be positive");
  if (crop_height > resize_height || crop_width > resize_width) {
    throw ConfigError("clip: crop " + std::to_string(crop_width) + "x" +
                      std::to_string(crop_height) + " does not fit resize " +
                      std::to_string(resize_width) + "x" + std::to_string(resize_height));
  }
}

void FrameSpec::validate() const {
  if (crop_height < 1 || crop_width < 1) throw ConfigError("frame: crop must be positive");
  if (crop_height > resize_height || crop_width > resize_width) {
    throw ConfigError("frame: crop does not fit resize");
  }
}

Tensor residual_clip(const Tensor& frames, bool signed_diff) {
  if (frames.rank() != 4) {
    throw ShapeError("residual_clip expects [T+1, H, W, C], got " + shape_string(frames.shape()));
  }
  if (frames.dim(0) < 2) throw ShapeError("residual_clip needs at least 2 frames");
  const std::size_t t = frames.dim(0) - 1;
  const std::size_t frame_size = frames.size() / frames.dim(0);
  Tensor out({t, frames.dim(1), frames.dim(2), frames.dim(3)});
  const double* src = frames.data();
  double* dst = out.data();
  for (std::size_t i = 0; i < t * frame_size; ++i) {
    const double d = src[i] - src[i + frame_size];
    dst[i] = signed_diff ? d : std::abs(d);
  }
  return out;
}

namespace {

struct Tap {
  std::size_t lo, hi;
  double frac;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double src = std::max(0.0, (static_cast<double>(i) + 0.5) * scale - 0.5);
    const auto lo = std::min(static_cast<std::size_t>(src), in - 1);
    taps[i] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

Tensor resize_bilinear(const Tensor& frame, std::size_t out_height, std::size_t out_width) {
  if (frame.rank() != 3) {
    throw ShapeError("resize_bilinear expects [H, W, C], got " + shape_string(frame.shape()));
  }
  if (out_height < 1 || out_width < 1) throw ShapeError("resize_bilinear: empty output");
  const std::size_t h = frame.dim(0), w = frame.dim(1), c = frame.dim(2);
  if (h == out_height && w == out_width) return frame;
  const auto ys = bilinear_taps(h, out_height);
  const auto xs = bilinear_taps(w, out_width);
  Tensor out({out_height, out_width, c});
  for (std::size_t y = 0; y < out_height; ++y) {
    const Tap& ty = ys[y];
    for (std::size_t x = 0; x < out_width; ++x) {
      const Tap& tx = xs[x];
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double p00 = frame[(ty.lo * w + tx.lo) * c + ch];
        const double p01 = frame[(ty.lo * w + tx.hi) * c + ch];
        const double p10 = frame[(ty.hi * w + tx.lo) * c + ch];
        const double p11 = frame[(ty.hi * w + tx.hi) * c + ch];
        const double top = p00 + (p01 - p00) * tx.frac;
        const double bottom = p10 + (p11 - p10) * tx.frac;
        out[(y * out_width + x) * c + ch] = top + (bottom - top) * ty.frac;
      }
    }
  }
  return out;
}

Tensor resize_clip(const Tensor& clip, std::size_t out_height, std::size_t out_width) {
  if (clip.rank() != 4) throw ShapeError("resize_clip expects [T, H, W, C]");
  if (clip.dim(1) == out_height && clip.dim(2) == out_width) return clip;
  const std::size_t t = clip.dim(0), c = clip.dim(3);
  const std::size_t in_frame = clip.dim(1) * clip.dim(2) * c;
  const std::size_t out_frame = out_height * out_width * c;
  Tensor out({t, out_height, out_width, c});
  for (std::size_t f = 0; f < t; ++f) {
    Tensor frame({clip.dim(1), clip.dim(2), c},
                 std::vector<double>(clip.data() + f * in_frame, clip.data() + (f + 1) * in_frame));
    const Tensor r = resize_bilinear(frame, out_height, out_width);
    std::copy(r.data(), r.data() + out_frame, out.data() + f * out_frame);
  }
  return out;
}

Tensor crop(const Tensor& data, std::size_t y, std::size_t x, std::size_t height,
            std::size_t width) {
  const bool clip = data.rank() == 4;
  if (!clip && data.rank() != 3) throw ShapeError("crop expects [T, H, W, C] or [H, W, C]");
  const std::size_t t = clip ? data.dim(0) : 1;
  const std::size_t h = data.dim(clip ? 1 : 0), w = data.dim(clip ? 2 : 1);
  const std::size_t c = data.shape().back();
  if (y + height > h || x + width > w) {
    throw ShapeError("crop window exceeds frame " + std::to_string(h) + "x" + std::to_string(w));
  }
  Shape shape = clip ? Shape{t, height, width, c} : Shape{height, width, c};
  Tensor out(shape);
  double* dst = out.data();
  for (std::size_t f = 0; f < t; ++f) {
    for (std::size_t r = 0; r < height; ++r) {
      const double* src = data.data() + ((f * h + y + r) * w + x) * c;
      dst = std::copy(src, src + width * c, dst);
    }
  }
  return out;
}

Tensor flip_horizontal(const Tensor& data) {
  if (data.rank() != 3 && data.rank() != 4) throw ShapeError("flip expects [T, H, W, C] or [H, W, C]");
  const std::size_t c = data.shape().back();
  const std::size_t w = data.shape()[data.rank() - 2];
  const std::size_t rows = data.size() / (w * c);
  Tensor out(data.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = data.data() + r * w * c;
    double* dst = out.data() + r * w * c;
    for (std::size_t x = 0; x < w; ++x) {
      std::copy(src + x * c, src + (x + 1) * c, dst + (w - 1 - x) * c);
    }
  }
  return out;
}

Tensor load_padded(const FrameSource& source, std::size_t index, std::size_t start,
                   std::size_t count) {
  const std::size_t available = source.records().at(index).frame_count;
  if (start >= available) throw std::out_of_range("clip start beyond last frame");
  const std::size_t end = std::min(available, start + count);
  Tensor loaded = source.load_frames(index, start, end);
  if (end - start == count) return loaded;
  const std::size_t frame_size = loaded.size() / loaded.dim(0);
  std::vector<double> data(loaded.vector());
  data.reserve(count * frame_size);
  const std::vector<double> last(data.end() - static_cast<std::ptrdiff_t>(frame_size), data.end());
  while (data.size() < count * frame_size) data.insert(data.end(), last.begin(), last.end());
  return Tensor({count, loaded.dim(1), loaded.dim(2), loaded.dim(3)}, std::move(data));
}

namespace {

Tensor prepare_clip(const FrameSource& source, std::size_t index, const ClipSpec& spec,
                    std::size_t start) {
  Tensor frames = load_padded(source, index, start, spec.source_frames());
  frames = resize_clip(frames, spec.resize_height, spec.resize_width);
  if (spec.mode == InputMode::residual) frames = residual_clip(frames, spec.signed_residual);
  return frames;
}

std::size_t uniform_index(Rng& rng, std::size_t max_inclusive) {
  return std::uniform_int_distribution<std::size_t>(0, max_inclusive)(rng);
}

}  // namespace

SampledClip sample_training_clip(const FrameSource& source, std::size_t index,
                                 const ClipSpec& spec, Rng& rng) {
  spec.validate();
  if (!spec.train_augment) throw std::invalid_argument("sample_training_clip needs train_augment");
  const auto& record = source.records().at(index);
  const std::size_t src_frames = spec.source_frames();
  const std::size_t max_start = record.frame_count > src_frames ? record.frame_count - src_frames : 0;

  SampledClip clip;
  clip.video_id = record.id;
  clip.start_frame = uniform_index(rng, max_start);
  Tensor frames = prepare_clip(source, index, spec, clip.start_frame);
  clip.augment.crop_y = uniform_index(rng, spec.resize_height - spec.crop_height);
  clip.augment.crop_x = uniform_index(rng, spec.resize_width - spec.crop_width);
  clip.augment.flipped = std::bernoulli_distribution(0.5)(rng);
  frames = crop(frames, clip.augment.crop_y, clip.augment.crop_x, spec.crop_height, spec.crop_width);
  clip.data = clip.augment.flipped ? flip_horizontal(frames) : std::move(frames);
  return clip;
}

std::vector<std::size_t> uniform_starts(std::size_t frame_count, std::size_t source_frames,
                                        std::size_t num_clips) {
  if (num_clips < 1) throw std::invalid_argument("num_clips must be >= 1");
  const std::size_t range = frame_count > source_frames ? frame_count - source_frames : 0;
  std::vector<std::size_t> starts(num_clips);
  if (num_clips == 1) {
    starts[0] = static_cast<std::size_t>(std::lround(static_cast<double>(range) / 2.0));
    return starts;
  }
  for (std::size_t k = 0; k < num_clips; ++k) {
    starts[k] = static_cast<std::size_t>(std::lround(static_cast<double>(k * range) /
                                                     static_cast<double>(num_clips - 1)));
  }
  return starts;
}

std::vector<SampledClip> sample_test_clips(const FrameSource& source, std::size_t index,
                                           const ClipSpec& spec, std::size_t num_clips) {
  spec.validate();
  const auto& record = source.records().at(index);
  const std::size_t y = (spec.resize_height - spec.crop_height) / 2;
  const std::size_t x = (spec.resize_width - spec.crop_width) / 2;
  std::vector<SampledClip> clips;
  for (std::size_t start : uniform_starts(record.frame_count, spec.source_frames(), num_clips)) {
    SampledClip clip;
    clip.video_id = record.id;
    clip.start_frame = start;
    clip.augment = {y, x, false};
    clip.data = crop(prepare_clip(source, index, spec, start), y, x, spec.crop_height, spec.crop_width);
    clips.push_back(std::move(clip));
  }
  return clips;
}

namespace {

Tensor prepare_frame(const FrameSource& source, std::size_t index, const FrameSpec& spec,
                     std::size_t frame) {
  Tensor one = source.load_frames(index, frame, frame + 1);
  one = std::move(one).reshaped({one.dim(1), one.dim(2), one.dim(3)});
  return resize_bilinear(one, spec.resize_height, spec.resize_width);
}

}  // namespace

SampledClip sample_training_frame(const FrameSource& source, std::size_t index,
                                  const FrameSpec& spec, Rng& rng) {
  spec.validate();
  if (!spec.train_augment) throw std::invalid_argument("sample_training_frame needs train_augment");
  const auto& record = source.records().at(index);
  SampledClip s;
  s.video_id = record.id;
  s.start_frame = uniform_index(rng, record.frame_count - 1);
  Tensor frame = prepare_frame(source, index, spec, s.start_frame);
  s.augment.crop_y = uniform_index(rng, spec.resize_height - spec.crop_height);
  s.augment.crop_x = uniform_index(rng, spec.resize_width - spec.crop_width);
  s.augment.flipped = std::bernoulli_distribution(0.5)(rng);
  frame = crop(frame, s.augment.crop_y, s.augment.crop_x, spec.crop_height, spec.crop_width);
  s.data = s.augment.flipped ? flip_horizontal(frame) : std::move(frame);
  return s;
}

std::vector<SampledClip> sample_test_frames(const FrameSource& source, std::size_t index,
                                            const FrameSpec& spec, std::size_t num_frames) {
  spec.validate();
  const auto& record = source.records().at(index);
  const std::size_t y = (spec.resize_height - spec.crop_height) / 2;
  const std::size_t x = (spec.resize_width - spec.crop_width) / 2;
  std::vector<SampledClip> frames;
  for (std::size_t f : uniform_starts(record.frame_count, 1, num_frames)) {
    SampledClip s;
    s.video_id = record.id;
    s.start_frame = f;
    s.augment = {y, x, false};
    s.data = crop(prepare_frame(source, index, spec, f), y, x, spec.crop_height, spec.crop_width);
    frames.push_back(std::move(s));
  }
  return frames;
}

}  // namespace resmotion::motioninput
