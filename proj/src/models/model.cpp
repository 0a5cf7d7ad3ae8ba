#include "resmotion/models/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "resmotion/core/errors.hpp"
#include "resmotion/util/hash.hpp"

namespace resmotion::models {

std::string_view to_string(PathKind p) { return p == PathKind::motion3d ? "motion3d" : "appearance2d"; }
std::string_view to_string(Downsample d) { return d == Downsample::stride ? "stride" : "pool"; }

PathKind parse_path(std::string_view s) {
  if (s == "motion3d") return PathKind::motion3d;
  if (s == "appearance2d") return PathKind::appearance2d;
  throw ConfigError("unknown model path '" + std::string(s) + "'");
}

Downsample parse_downsample(std::string_view s) {
  if (s == "stride") return Downsample::stride;
  if (s == "pool") return Downsample::pool;
  throw ConfigError("unknown downsample '" + std::string(s) + "'");
}

ModelConfig ModelConfig::full_motion(std::size_t num_classes) {
  ModelConfig c;
  c.num_classes = num_classes;
  return c;
}

ModelConfig ModelConfig::full_appearance(std::size_t num_classes) {
  ModelConfig c;
  c.path = PathKind::appearance2d;
  c.downsample = Downsample::stride;
  c.num_classes = num_classes;
  c.input_shape = {3, 224, 224};
  return c;
}

ModelConfig ModelConfig::desk_motion(std::size_t num_classes) {
  ModelConfig c = full_motion(num_classes);
  c.width_multiplier = 0.125;
  c.blocks_per_stage = 1;
  c.input_shape = {3, 8, 24, 24};
  return c;
}

ModelConfig ModelConfig::desk_appearance(std::size_t num_classes) {
  ModelConfig c = full_appearance(num_classes);
  c.width_multiplier = 0.125;
  c.blocks_per_stage = 1;
  c.input_shape = {3, 24, 24};
  return c;
}

std::vector<std::size_t> ModelConfig::stage_widths() const {
  std::vector<std::size_t> widths;
  for (double base : {64.0, 128.0, 256.0, 512.0}) {
    widths.push_back(std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(base * width_multiplier))));
  }
  return widths;
}

void ModelConfig::validate() const {
  if (!(width_multiplier > 0.0 && width_multiplier <= 1.0)) {
    throw ConfigError("model: width_multiplier must be in (0, 1]");
  }
  if (blocks_per_stage < 1) throw ConfigError("model: blocks_per_stage must be >= 1");
  if (num_classes < 1) throw ConfigError("model: num_classes must be >= 1");
  if (fea_diff && path != PathKind::motion3d) throw ConfigError("model: fea_diff requires motion3d");
  const std::size_t rank = path == PathKind::motion3d ? 4 : 3;
  if (input_shape.size() != rank) {
    throw ConfigError("model: input_shape must have " + std::to_string(rank) + " extents for " +
                      std::string(to_string(path)));
  }
  for (auto d : input_shape) {
    if (d == 0) throw ConfigError("model: input_shape extents must be positive");
  }
}

std::string ModelConfig::canonical() const {
  std::ostringstream os;
  os << "path=" << to_string(path) << '\n'
     << "downsample=" << to_string(downsample) << '\n'
     << "activation=" << nn::to_string(activation) << '\n'
     << "fea_diff=" << (fea_diff ? "true" : "false") << '\n'
     << "fea_diff_signed=" << (fea_diff_signed ? "true" : "false") << '\n'
     << "width_multiplier=" << width_multiplier << '\n'
     << "blocks_per_stage=" << blocks_per_stage << '\n'
     << "batchnorm=" << (batchnorm ? "true" : "false") << '\n'
     << "num_classes=" << num_classes << '\n'
     << "input_shape=";
  for (std::size_t i = 0; i < input_shape.size(); ++i) os << (i ? "," : "") << input_shape[i];
  os << '\n';
  return os.str();
}

std::uint64_t ModelConfig::hash() const { return util::fnv1a64(canonical()); }

// ---- Model -------------------------------------------------------------------

Model::Model(ModelConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
  config_.validate();
  Initializer init(init_seed);
  const bool flat = config_.path == PathKind::appearance2d;
  const auto widths = config_.stage_widths();
  const std::size_t in_channels = config_.input_shape[0];

  nn::ConvSpec stem;
  stem.kernel = {flat ? 1u : 3u, 7, 7};
  stem.stride = {1, 2, 2};
  stem.padding = {flat ? 0u : 1u, 3, 3};
  stem.in_channels = in_channels;
  stem.out_channels = widths[0];
  layers_.push_back(std::make_unique<Conv>("stem.conv", stem, flat, init));
  if (config_.batchnorm) layers_.push_back(std::make_unique<BatchNorm>("stem.bn", widths[0]));
  layers_.push_back(std::make_unique<Act>("stem.act", config_.activation));
  if (config_.fea_diff) {
    layers_.push_back(std::make_unique<TemporalDiff>("fea_diff", config_.fea_diff_signed));
  }

  std::size_t channels = widths[0];
  for (std::size_t s = 0; s < widths.size(); ++s) {
    for (std::size_t b = 0; b < config_.blocks_per_stage; ++b) {
      BlockOptions o;
      o.in_channels = channels;
      o.out_channels = widths[s];
      o.downsample = s > 0 && b == 0;
      o.pool_variant = config_.downsample == Downsample::pool;
      o.spatial_only = flat;
      o.batchnorm = config_.batchnorm;
      o.activation = config_.activation;
      layers_.push_back(std::make_unique<ResidualBlock>(
          "stage" + std::to_string(s + 1) + ".block" + std::to_string(b), o, init));
      channels = widths[s];
    }
  }
  layers_.push_back(std::make_unique<GlobalAvgPool>("avgpool"));
  layers_.push_back(std::make_unique<Linear>("fc", channels, config_.num_classes, init));
  for (auto& l : layers_) l->collect(registry_);
}

Tensor Model::forward(const Tensor& x, Mode mode) {
  const Shape& expected = config_.input_shape;
  if (x.rank() != expected.size() + 1 ||
      !std::equal(expected.begin(), expected.end(), x.shape().begin() + 1)) {
    throw ShapeError("model expects input [N, " + shape_string(expected).substr(1) + ", got " +
                     shape_string(x.shape()));
  }
  trace_.clear();
  Tensor h = x;
  for (auto& l : layers_) {
    h = l->forward(h, mode);
    trace_.emplace_back(l->name(), h.shape());
  }
  return h;
}

Tensor Model::backward(const Tensor& grad_logits) {
  Tensor g = grad_logits;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

void Model::zero_grad() {
  for (auto* p : registry_.params) p->grad.fill(0.0);
}

std::vector<NamedTensor> Model::state() {
  std::vector<NamedTensor> out;
  for (auto* p : registry_.params) out.push_back({p->name, &p->value});
  for (auto& b : registry_.buffers) out.push_back(b);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : registry_.params) n += p->value.size();
  return n;
}

Tensor& Model::tensor(const std::string& name) {
  for (auto& t : state()) {
    if (t.name == name) return *t.tensor;
  }
  throw std::out_of_range("no tensor named '" + name + "'");
}

Model build_motion3d(const ModelConfig& config, std::uint64_t init_seed) {
  if (config.path != PathKind::motion3d || config.fea_diff) {
    throw ConfigError("build_motion3d needs path=motion3d without fea_diff");
  }
  return Model(config, init_seed);
}

Model build_fea_diff(const ModelConfig& config, std::uint64_t init_seed) {
  ModelConfig c = config;
  if (c.path != PathKind::motion3d) throw ConfigError("build_fea_diff needs path=motion3d");
  c.fea_diff = true;
  if (c.input_shape.size() == 4 && c.input_shape[1] < 2) {
    // The stem keeps the temporal extent, so it must already be >= 2.
    throw ShapeError("fea_diff: temporal extent after the stem is " +
                     std::to_string(c.input_shape[1]) + ", need at least 2");
  }
  return Model(c, init_seed);
}

Model build_appearance2d(const ModelConfig& config, std::uint64_t init_seed) {
  if (config.path != PathKind::appearance2d) throw ConfigError("build_appearance2d needs path=appearance2d");
  return Model(config, init_seed);
}

Model build_model(const ModelConfig& config, std::uint64_t init_seed) {
  if (config.path == PathKind::appearance2d) return build_appearance2d(config, init_seed);
  return config.fea_diff ? build_fea_diff(config, init_seed) : build_motion3d(config, init_seed);
}

}  // namespace resmotion::models
