#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "resmotion/models/layers.hpp"

namespace resmotion::models {

enum class PathKind { motion3d, appearance2d };
enum class Downsample { stride, pool };

std::string_view to_string(PathKind p);
std::string_view to_string(Downsample d);
PathKind parse_path(std::string_view s);
Downsample parse_downsample(std::string_view s);

// Architecture description. Stage widths are round(width_multiplier * {64,
// 128, 256, 512}); the stem is a 3x7x7 convolution (7x7 in 2D) with spatial
// stride 2 and temporal stride 1.
struct ModelConfig {
  PathKind path = PathKind::motion3d;
  Downsample downsample = Downsample::pool;
  nn::Activation activation = nn::Activation::elu;
  bool fea_diff = false;
  bool fea_diff_signed = false;
  double width_multiplier = 1.0;
  std::size_t blocks_per_stage = 2;
  bool batchnorm = true;
  std::size_t num_classes = 101;
  // Per-sample input: (C, T, H, W) for motion3d, (C, H, W) for appearance2d.
  Shape input_shape{3, 16, 112, 112};

  // ResNet-18 at full width, 16 x 112 x 112 clips.
  static ModelConfig full_motion(std::size_t num_classes);
  // ResNet-18 2D over 224 x 224 frames.
  static ModelConfig full_appearance(std::size_t num_classes);
  // Width 0.125, one block per stage, 8 x 24 x 24 clips (24 x 24 frames).
  static ModelConfig desk_motion(std::size_t num_classes);
  static ModelConfig desk_appearance(std::size_t num_classes);

  std::vector<std::size_t> stage_widths() const;
  void validate() const;
  // One "key=value" line per field in a fixed order.
  std::string canonical() const;
  std::uint64_t hash() const;
};

// A network built from a ModelConfig. Forward/backward run on one thread of
// control; a model is not safe to share while training.
class Model {
 public:
  explicit Model(ModelConfig config, std::uint64_t init_seed = 0);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  // x: [N, ...input_shape] -> logits [N, num_classes].
  Tensor forward(const Tensor& x, Mode mode);
  // Gradient of the loss w.r.t. the input; parameter gradients accumulate.
  Tensor backward(const Tensor& grad_logits);
  void zero_grad();

  const ModelConfig& config() const { return config_; }
  const std::vector<Parameter*>& parameters() { return registry_.params; }
  // Every serialized tensor: parameter values then buffers, in build order.
  std::vector<NamedTensor> state();
  std::size_t parameter_count() const;

  // Parameter or buffer by name; throws std::out_of_range.
  Tensor& tensor(const std::string& name);

  // (layer name, output shape) of each top-level layer for the last forward.
  const std::vector<std::pair<std::string, Shape>>& trace() const { return trace_; }

 private:
  ModelConfig config_;
  std::vector<LayerPtr> layers_;
  Registry registry_;
  std::vector<std::pair<std::string, Shape>> trace_;
};

Model build_motion3d(const ModelConfig& config, std::uint64_t init_seed = 0);
Model build_fea_diff(const ModelConfig& config, std::uint64_t init_seed = 0);
Model build_appearance2d(const ModelConfig& config, std::uint64_t init_seed = 0);
// Dispatches on config.path / config.fea_diff.
Model build_model(const ModelConfig& config, std::uint64_t init_seed = 0);

// ---- Parameter file ----------------------------------------------------------
//
//   "RMP1"
//   u64 config hash
//   u32 dtype                              (1 = f32, 2 = f64)
//   u32 length, bytes: metadata text       (canonical config and extras)
//   u32 tensor count
//   per tensor: u32 name length, name bytes, u32 rank, u32 dims[rank]
//   payload: tensor values in table order
//
// Little-endian throughout.

enum class ParamDType : std::uint32_t { f32 = 1, f64 = 2 };

struct ParamFile {
  std::uint64_t config_hash = 0;
  ParamDType dtype = ParamDType::f64;
  std::string metadata;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void write_param_file(std::ostream& os, const ParamFile& file);
ParamFile read_param_file(std::istream& is);

ParamFile snapshot(Model& model, ParamDType dtype = ParamDType::f64, std::string metadata = {});
// Copies tensors into the model after checking the config hash and names.
void restore(Model& model, const ParamFile& file);

void save_params(Model& model, const std::filesystem::path& path,
                 ParamDType dtype = ParamDType::f64, const std::string& metadata = {});
// Throws FormatError on a corrupt file or a config hash mismatch.
void load_params(Model& model, const std::filesystem::path& path);

// Git blob hash of all serialized tensors, for determinism checks.
std::string parameter_hash(Model& model);

}  // namespace resmotion::models
