#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "resmotion/framestore/framestore.hpp"
#include "resmotion/models/model.hpp"
#include "resmotion/motioninput/pipeline.hpp"
#include "resmotion/synthgen/synthgen.hpp"
#include "resmotion/trainer/trainer.hpp"

namespace resmotion::cli {

// Clip or frame sampling for the configured path.
struct InputConfig {
  motioninput::ClipSpec clip;
  motioninput::FrameSpec frame;
  std::size_t num_clips = 5;  // test clips (or frames) per video
};

struct PackConfig {
  framestore::PixelType dtype = framestore::PixelType::u8;
  std::string split = "all";  // all, train or val
  std::size_t clips_per_video = 1;
};

// Experiment grid for `ablate`; every combination is trained and evaluated.
struct AblationGrid {
  std::vector<motioninput::InputMode> modes{motioninput::InputMode::rgb, motioninput::InputMode::residual};
  std::vector<models::Downsample> downsample{models::Downsample::pool};
  std::vector<nn::Activation> activation{nn::Activation::elu};
  std::vector<bool> fea_diff{false};
};

// Everything a command can be configured with. Defaults are the full-scale
// values; the desk-scale presets live in the example configs.
struct RunConfig {
  synthgen::SynthConfig synth;
  InputConfig input;
  models::ModelConfig model;  // num_classes and input_shape are filled from data
  trainer::TrainConfig train;
  PackConfig pack;
  AblationGrid ablate;

  motioninput::InputPipeline pipeline() const;
  // Model config with the input shape of the pipeline and `num_classes`.
  models::ModelConfig resolved_model(std::size_t num_classes) const;
};

// INI text with sections [synth], [input], [model], [train], [pack] and
// [ablate]. Unknown sections or keys and malformed values throw ConfigError.
RunConfig parse_config(const std::string& ini_text);
RunConfig load_config(const std::filesystem::path& path);
// Fully resolved config as INI; parse_config(to_ini(c)) == c field by field.
std::string to_ini(const RunConfig& config);

}  // namespace resmotion::cli
