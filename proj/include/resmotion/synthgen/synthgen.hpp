#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "resmotion/core/tensor.hpp"
#include "resmotion/framestore/framestore.hpp"

namespace resmotion::synthgen {

namespace fs = std::filesystem;

enum class Task { motion_labels, appearance_labels, mixed_labels };
enum class Background { plain, textured, shuffled_across_classes };

// Sprite trajectories. Velocities are in pixels per frame; the linear
// families move along one axis at `slow_speed` or `fast_speed`, the
// oscillations follow c + A sin(2 pi t / P + phase) along one axis.
// `stationary` is not a label family; it exists for tests.
enum class MotionFamily {
  right_slow, right_fast, left_slow, left_fast,
  down_slow, down_fast, up_slow, up_fast,
  oscillate_horizontal, oscillate_vertical,
  stationary,
};

enum class Shape2D { square, disc, triangle, cross, ring, diamond };

std::string_view to_string(Task t);
std::string_view to_string(Background b);
std::string_view to_string(MotionFamily f);
std::string_view to_string(Shape2D s);
Task parse_task(std::string_view s);
Background parse_background(std::string_view s);
MotionFamily parse_motion_family(std::string_view s);
Shape2D parse_shape(std::string_view s);

using Rgb = std::array<double, 3>;

struct Appearance {
  Shape2D shape = Shape2D::square;
  Rgb color{1.0, 0.0, 0.0};
  friend bool operator==(const Appearance&, const Appearance&) = default;
};

struct SynthConfig {
  Task task = Task::motion_labels;
  std::size_t num_classes = 4;
  std::size_t videos_per_class = 10;
  std::size_t frames_per_video = 24;
  std::size_t frame_size = 32;
  std::size_t sprite_size = 8;
  Background background = Background::textured;
  std::size_t background_bank = 16;  // shared textures for shuffled_across_classes
  std::size_t camera_jitter_px = 0;
  double slow_speed = 0.5;
  double fast_speed = 1.0;
  double oscillation_amplitude = 6.0;
  double oscillation_period = 8.0;
  // Pools that appearances are drawn from. For appearance_labels (and the
  // appearance half of mixed_labels) class k uses `appearance_classes[k]` when
  // given, otherwise the k-th (shape, color) pair in shape-major order.
  std::vector<Shape2D> shapes{Shape2D::square, Shape2D::disc, Shape2D::triangle, Shape2D::cross};
  std::vector<Rgb> colors{{0.9, 0.15, 0.15}, {0.15, 0.8, 0.2}, {0.2, 0.3, 0.95}, {0.95, 0.85, 0.1}};
  std::vector<Appearance> appearance_classes;
  // Motion families used as labels (motion_labels, mixed_labels) or drawn at
  // random (appearance_labels). Empty: the default family order.
  std::vector<MotionFamily> motion_families;
  // mixed_labels: number of appearance families A; label = m * A + a.
  std::size_t mixed_appearance_classes = 2;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
  // Motion families in label order (or the random pool for appearance_labels).
  std::vector<MotionFamily> resolved_motion_families() const;
  std::vector<Appearance> resolved_appearance_classes() const;
  std::vector<std::string> class_names() const;
  std::string canonical() const;
};

// Label families in the order used when SynthConfig::motion_families is empty.
const std::vector<MotionFamily>& default_motion_order();

// Everything needed to re-render a video.
struct GenerationTrace {
  std::uint64_t video_seed = 0;
  MotionFamily motion = MotionFamily::stationary;
  Appearance appearance;
  double start_x = 0.0, start_y = 0.0;  // sprite top-left at t = 0
  double phase = 0.0;                   // oscillations only
  std::uint64_t background_seed = 0;
  Rgb plain_color{0.5, 0.5, 0.5};
  std::vector<std::array<int, 2>> jitter;  // (dy, dx) per frame
  friend bool operator==(const GenerationTrace&, const GenerationTrace&) = default;
};

struct SynthVideo {
  std::string id;
  int label = 0;
  Tensor frames;  // [F, H, W, 3] in [0, 1]
  GenerationTrace trace;
};

// Sprite top-left corner (x, y) at frame t.
std::array<double, 2> sprite_position(const SynthConfig& config, const GenerationTrace& trace,
                                      std::size_t t);

// Renders frames from a trace; generate() uses the same routine.
Tensor render(const SynthConfig& config, const GenerationTrace& trace);

class SynthDataset final : public framestore::FrameSource {
 public:
  SynthDataset(SynthConfig config, std::vector<SynthVideo> videos, std::vector<std::size_t> train,
               std::vector<std::size_t> val);

  const std::vector<framestore::VideoRecord>& records() const override { return records_; }
  Tensor load_frames(std::size_t index, std::size_t begin, std::size_t end) const override;

  const SynthConfig& config() const { return config_; }
  const std::vector<SynthVideo>& videos() const { return videos_; }
  const std::vector<std::size_t>& train_indices() const { return train_; }
  const std::vector<std::size_t>& val_indices() const { return val_; }

 private:
  SynthConfig config_;
  std::vector<SynthVideo> videos_;
  std::vector<framestore::VideoRecord> records_;
  std::vector<std::size_t> train_, val_;
};

// Deterministic in config.seed, independent of thread count. Exactly
// videos_per_class videos per class; a stratified train/val split.
// Throws ConfigError when the sprite cannot fit its trajectory.
SynthDataset generate(const SynthConfig& config);

// Writes <root>/videos/<id>/frame_NNNNN.ppm, manifest.txt (all videos),
// train.txt, val.txt and classes.txt.
void export_dataset(const SynthDataset& dataset, const fs::path& root);

// Reads train.txt / val.txt of an exported dataset as indices into the
// records of a DiskDataset over manifest.txt.
std::vector<std::size_t> split_indices(const framestore::FrameSource& source, const fs::path& split_file);
std::vector<std::string> read_class_names(const fs::path& root, std::size_t num_classes);

}  // namespace resmotion::synthgen
