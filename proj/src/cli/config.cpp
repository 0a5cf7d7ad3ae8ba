#include "resmotion/cli/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "resmotion/core/errors.hpp"

namespace resmotion::cli {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"synth",
       {"task", "num_classes", "videos_per_class", "frames_per_video", "frame_size", "sprite_size",
        "background", "background_bank", "camera_jitter_px", "slow_speed", "fast_speed",
        "oscillation_amplitude", "oscillation_period", "shapes", "colors", "appearance_classes",
        "motion_families", "mixed_appearance_classes", "val_fraction", "seed"}},
      {"input",
       {"mode", "frames", "crop_height", "crop_width", "resize_width", "resize_height",
        "signed_residual", "frame_crop_height", "frame_crop_width", "frame_resize_width",
        "frame_resize_height", "num_clips"}},
      {"model",
       {"path", "downsample", "activation", "fea_diff", "fea_diff_signed", "width_multiplier",
        "blocks_per_stage", "batchnorm"}},
      {"train",
       {"batch_size", "initial_lr", "epochs", "lr_schedule", "milestones", "lr_factor", "patience",
        "momentum", "weight_decay", "seed", "deterministic", "val_every", "val_clips"}},
      {"pack", {"dtype", "split", "clips_per_video"}},
      {"ablate", {"modes", "downsample", "activation", "fea_diff"}},
  };
  return s;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

class Section {
 public:
  Section(const pt::ptree* tree, std::string name) : tree_(tree), name_(std::move(name)) {}

  bool has(const std::string& key) const { return tree_ && tree_->find(key) != tree_->not_found(); }
  std::string raw(const std::string& key) const { return tree_->get<std::string>(key); }

  template <typename T>
  void number(const std::string& key, T& out) const {
    if (!has(key)) return;
    const std::string text = raw(key);
    T value{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) fail(key, text, "a number");
    out = value;
  }

  void boolean(const std::string& key, bool& out) const {
    if (!has(key)) return;
    out = parse_bool(key, raw(key));
  }

  template <typename F>
  void text(const std::string& key, F&& apply) const {
    if (has(key)) apply(raw(key));
  }

  bool parse_bool(const std::string& key, const std::string& v) const {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(key, v, "true or false");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& value, const char* expected) const {
    throw ConfigError("[" + name_ + "] " + key + " = '" + value + "': expected " + expected);
  }

 private:
  const pt::ptree* tree_;
  std::string name_;
};

synthgen::Rgb parse_color(const std::string& text) {
  std::string hex = text;
  if (!hex.empty() && hex.front() == '#') hex.erase(0, 1);
  if (hex.size() != 6) throw ConfigError("color '" + text + "' must be 6 hex digits");
  synthgen::Rgb c{};
  for (std::size_t i = 0; i < 3; ++i) {
    unsigned v = 0;
    const auto [ptr, ec] = std::from_chars(hex.data() + 2 * i, hex.data() + 2 * i + 2, v, 16);
    if (ec != std::errc() || ptr != hex.data() + 2 * i + 2) throw ConfigError("bad color '" + text + "'");
    c[i] = v / 255.0;
  }
  return c;
}

std::string color_hex(const synthgen::Rgb& c) {
  char buf[8];
  auto byte = [](double v) { return static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
  std::snprintf(buf, sizeof buf, "%02x%02x%02x", byte(c[0]), byte(c[1]), byte(c[2]));
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& items, auto&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += fmt(items[i]);
  }
  return out;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

motioninput::InputPipeline RunConfig::pipeline() const {
  if (model.path == models::PathKind::appearance2d) return motioninput::InputPipeline(input.frame);
  return motioninput::InputPipeline(input.clip);
}

models::ModelConfig RunConfig::resolved_model(std::size_t num_classes) const {
  models::ModelConfig m = model;
  m.num_classes = num_classes;
  m.input_shape = pipeline().sample_shape();
  m.validate();
  return m;
}

RunConfig parse_config(const std::string& ini_text) {
  pt::ptree tree;
  try {
    std::istringstream in(ini_text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    auto it = schema().find(section);
    if (it == schema().end()) {
      throw ConfigError("config: unknown section [" + section + "]" +
                        (body.empty() ? " (keys must sit inside a section)" : ""));
    }
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
    }
  }
  auto section = [&](const std::string& name) {
    auto it = tree.find(name);
    return Section(it == tree.not_found() ? nullptr : &it->second, name);
  };

  RunConfig c;
  {
    const Section s = section("synth");
    auto& y = c.synth;
    s.text("task", [&](const std::string& v) { y.task = synthgen::parse_task(v); });
    s.number("num_classes", y.num_classes);
    s.number("videos_per_class", y.videos_per_class);
    s.number("frames_per_video", y.frames_per_video);
    s.number("frame_size", y.frame_size);
    s.number("sprite_size", y.sprite_size);
    s.text("background", [&](const std::string& v) { y.background = synthgen::parse_background(v); });
    s.number("background_bank", y.background_bank);
    s.number("camera_jitter_px", y.camera_jitter_px);
    s.number("slow_speed", y.slow_speed);
    s.number("fast_speed", y.fast_speed);
    s.number("oscillation_amplitude", y.oscillation_amplitude);
    s.number("oscillation_period", y.oscillation_period);
    s.text("shapes", [&](const std::string& v) {
      y.shapes.clear();
      for (const auto& item : split_list(v)) y.shapes.push_back(synthgen::parse_shape(item));
    });
    s.text("colors", [&](const std::string& v) {
      y.colors.clear();
      for (const auto& item : split_list(v)) y.colors.push_back(parse_color(item));
    });
    s.text("appearance_classes", [&](const std::string& v) {
      y.appearance_classes.clear();
      for (const auto& item : split_list(v)) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError("appearance class '" + item + "' must be shape:color");
        y.appearance_classes.push_back(
            {synthgen::parse_shape(item.substr(0, colon)), parse_color(item.substr(colon + 1))});
      }
    });
    s.text("motion_families", [&](const std::string& v) {
      y.motion_families.clear();
      for (const auto& item : split_list(v)) y.motion_families.push_back(synthgen::parse_motion_family(item));
    });
    s.number("mixed_appearance_classes", y.mixed_appearance_classes);
    s.number("val_fraction", y.val_fraction);
    s.number("seed", y.seed);
  }
  {
    const Section s = section("input");
    auto& clip = c.input.clip;
    auto& frame = c.input.frame;
    s.text("mode", [&](const std::string& v) { clip.mode = motioninput::parse_input_mode(v); });
    s.number("frames", clip.frames);
    s.number("crop_height", clip.crop_height);
    s.number("crop_width", clip.crop_width);
    s.number("resize_width", clip.resize_width);
    s.number("resize_height", clip.resize_height);
    s.boolean("signed_residual", clip.signed_residual);
    s.number("frame_crop_height", frame.crop_height);
    s.number("frame_crop_width", frame.crop_width);
    s.number("frame_resize_width", frame.resize_width);
    s.number("frame_resize_height", frame.resize_height);
    s.number("num_clips", c.input.num_clips);
    if (c.input.num_clips < 1) throw ConfigError("[input] num_clips must be >= 1");
  }
  {
    const Section s = section("model");
    auto& m = c.model;
    s.text("path", [&](const std::string& v) { m.path = models::parse_path(v); });
    s.text("downsample", [&](const std::string& v) { m.downsample = models::parse_downsample(v); });
    s.text("activation", [&](const std::string& v) { m.activation = nn::parse_activation(v); });
    s.boolean("fea_diff", m.fea_diff);
    s.boolean("fea_diff_signed", m.fea_diff_signed);
    s.number("width_multiplier", m.width_multiplier);
    s.number("blocks_per_stage", m.blocks_per_stage);
    s.boolean("batchnorm", m.batchnorm);
  }
  {
    const Section s = section("train");
    auto& t = c.train;
    s.number("batch_size", t.batch_size);
    s.number("initial_lr", t.initial_lr);
    s.number("epochs", t.epochs);
    s.text("lr_schedule", [&](const std::string& v) { t.schedule.kind = trainer::parse_schedule(v); });
    s.text("milestones", [&](const std::string& v) {
      t.schedule.milestones.clear();
      for (const auto& item : split_list(v)) {
        std::size_t m = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), m);
        if (ec != std::errc() || ptr != item.data() + item.size()) s.fail("milestones", v, "integers");
        t.schedule.milestones.push_back(m);
      }
    });
    s.number("lr_factor", t.schedule.factor);
    s.number("patience", t.schedule.patience);
    s.number("momentum", t.momentum);
    s.number("weight_decay", t.weight_decay);
    s.number("seed", t.seed);
    s.boolean("deterministic", t.deterministic);
    s.number("val_every", t.val_every);
    s.number("val_clips", t.val_clips);
  }
  {
    const Section s = section("pack");
    s.text("dtype", [&](const std::string& v) {
      if (v == "u8") c.pack.dtype = framestore::PixelType::u8;
      else if (v == "f32") c.pack.dtype = framestore::PixelType::f32;
      else s.fail("dtype", v, "u8 or f32");
    });
    s.text("split", [&](const std::string& v) {
      if (v != "all" && v != "train" && v != "val") s.fail("split", v, "all, train or val");
      c.pack.split = v;
    });
    s.number("clips_per_video", c.pack.clips_per_video);
    if (c.pack.clips_per_video < 1) throw ConfigError("[pack] clips_per_video must be >= 1");
  }
  {
    const Section s = section("ablate");
    auto& g = c.ablate;
    s.text("modes", [&](const std::string& v) {
      g.modes.clear();
      for (const auto& item : split_list(v)) g.modes.push_back(motioninput::parse_input_mode(item));
    });
    s.text("downsample", [&](const std::string& v) {
      g.downsample.clear();
      for (const auto& item : split_list(v)) g.downsample.push_back(models::parse_downsample(item));
    });
    s.text("activation", [&](const std::string& v) {
      g.activation.clear();
      for (const auto& item : split_list(v)) g.activation.push_back(nn::parse_activation(item));
    });
    s.text("fea_diff", [&](const std::string& v) {
      g.fea_diff.clear();
      for (const auto& item : split_list(v)) g.fea_diff.push_back(s.parse_bool("fea_diff", item));
    });
    if (g.modes.empty() || g.downsample.empty() || g.activation.empty() || g.fea_diff.empty()) {
      throw ConfigError("[ablate] every grid axis needs at least one value");
    }
  }
  c.train.validate();
  c.input.clip.validate();
  c.input.frame.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_ini(const RunConfig& c) {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  std::ostringstream os;
  const auto& y = c.synth;
  os << "[synth]\n"
     << "task=" << to_string(y.task) << '\n'
     << "num_classes=" << y.num_classes << '\n'
     << "videos_per_class=" << y.videos_per_class << '\n'
     << "frames_per_video=" << y.frames_per_video << '\n'
     << "frame_size=" << y.frame_size << '\n'
     << "sprite_size=" << y.sprite_size << '\n'
     << "background=" << to_string(y.background) << '\n'
     << "background_bank=" << y.background_bank << '\n'
     << "camera_jitter_px=" << y.camera_jitter_px << '\n'
     << "slow_speed=" << num(y.slow_speed) << '\n'
     << "fast_speed=" << num(y.fast_speed) << '\n'
     << "oscillation_amplitude=" << num(y.oscillation_amplitude) << '\n'
     << "oscillation_period=" << num(y.oscillation_period) << '\n'
     << "shapes=" << join(y.shapes, [](auto s) { return std::string(to_string(s)); }) << '\n'
     << "colors=" << join(y.colors, color_hex) << '\n'
     << "appearance_classes="
     << join(y.appearance_classes,
             [](const synthgen::Appearance& a) { return std::string(to_string(a.shape)) + ":" + color_hex(a.color); })
     << '\n'
     << "motion_families=" << join(y.motion_families, [](auto f) { return std::string(to_string(f)); }) << '\n'
     << "mixed_appearance_classes=" << y.mixed_appearance_classes << '\n'
     << "val_fraction=" << num(y.val_fraction) << '\n'
     << "seed=" << y.seed << "\n\n";

  const auto& clip = c.input.clip;
  const auto& frame = c.input.frame;
  os << "[input]\n"
     << "mode=" << motioninput::to_string(clip.mode) << '\n'
     << "frames=" << clip.frames << '\n'
     << "crop_height=" << clip.crop_height << '\n'
     << "crop_width=" << clip.crop_width << '\n'
     << "resize_width=" << clip.resize_width << '\n'
     << "resize_height=" << clip.resize_height << '\n'
     << "signed_residual=" << b(clip.signed_residual) << '\n'
     << "frame_crop_height=" << frame.crop_height << '\n'
     << "frame_crop_width=" << frame.crop_width << '\n'
     << "frame_resize_width=" << frame.resize_width << '\n'
     << "frame_resize_height=" << frame.resize_height << '\n'
     << "num_clips=" << c.input.num_clips << "\n\n";

  const auto& m = c.model;
  os << "[model]\n"
     << "path=" << models::to_string(m.path) << '\n'
     << "downsample=" << models::to_string(m.downsample) << '\n'
     << "activation=" << nn::to_string(m.activation) << '\n'
     << "fea_diff=" << b(m.fea_diff) << '\n'
     << "fea_diff_signed=" << b(m.fea_diff_signed) << '\n'
     << "width_multiplier=" << num(m.width_multiplier) << '\n'
     << "blocks_per_stage=" << m.blocks_per_stage << '\n'
     << "batchnorm=" << b(m.batchnorm) << "\n\n";

  const auto& t = c.train;
  os << "[train]\n"
     << "batch_size=" << t.batch_size << '\n'
     << "initial_lr=" << num(t.initial_lr) << '\n'
     << "epochs=" << t.epochs << '\n'
     << "lr_schedule=" << trainer::to_string(t.schedule.kind) << '\n'
     << "milestones=" << join(t.effective_milestones(), [](std::size_t v) { return std::to_string(v); }) << '\n'
     << "lr_factor=" << num(t.schedule.factor) << '\n'
     << "patience=" << t.schedule.patience << '\n'
     << "momentum=" << num(t.momentum) << '\n'
     << "weight_decay=" << num(t.weight_decay) << '\n'
     << "seed=" << t.seed << '\n'
     << "deterministic=" << b(t.deterministic) << '\n'
     << "val_every=" << t.val_every << '\n'
     << "val_clips=" << t.val_clips << "\n\n";

  os << "[pack]\n"
     << "dtype=" << (c.pack.dtype == framestore::PixelType::u8 ? "u8" : "f32") << '\n'
     << "split=" << c.pack.split << '\n'
     << "clips_per_video=" << c.pack.clips_per_video << "\n\n";

  const auto& g = c.ablate;
  os << "[ablate]\n"
     << "modes=" << join(g.modes, [](auto v) { return std::string(motioninput::to_string(v)); }) << '\n'
     << "downsample=" << join(g.downsample, [](auto v) { return std::string(models::to_string(v)); }) << '\n'
     << "activation=" << join(g.activation, [](auto v) { return std::string(nn::to_string(v)); }) << '\n'
     << "fea_diff=" << join(g.fea_diff, [&](bool v) { return b(v); }) << '\n';
  return os.str();
}

}  // namespace resmotion::cli
