#include "resmotion/synthgen/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "resmotion/core/errors.hpp"

namespace resmotion::synthgen {

namespace {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(seed ^ splitmix64(stream)) + index);
}

constexpr std::uint64_t kVideoStream = 1, kSplitStream = 2, kBankStream = 3;

template <typename E>
struct Names {
  E value;
  std::string_view name;
};

constexpr Names<MotionFamily> kMotionNames[] = {
    {MotionFamily::right_slow, "right_slow"},
    {MotionFamily::right_fast, "right_fast"},
    {MotionFamily::left_slow, "left_slow"},
    {MotionFamily::left_fast, "left_fast"},
    {MotionFamily::down_slow, "down_slow"},
    {MotionFamily::down_fast, "down_fast"},
    {MotionFamily::up_slow, "up_slow"},
    {MotionFamily::up_fast, "up_fast"},
    {MotionFamily::oscillate_horizontal, "oscillate_horizontal"},
    {MotionFamily::oscillate_vertical, "oscillate_vertical"},
    {MotionFamily::stationary, "stationary"},
};

constexpr Names<Shape2D> kShapeNames[] = {
    {Shape2D::square, "square"},     {Shape2D::disc, "disc"},   {Shape2D::triangle, "triangle"},
    {Shape2D::cross, "cross"},       {Shape2D::ring, "ring"},   {Shape2D::diamond, "diamond"},
};

template <typename E, std::size_t N>
std::string_view lookup_name(const Names<E> (&table)[N], E value) {
  for (const auto& n : table) {
    if (n.value == value) return n.name;
  }
  return "?";
}

template <typename E, std::size_t N>
E lookup_value(const Names<E> (&table)[N], std::string_view name, const char* what) {
  for (const auto& n : table) {
    if (n.name == name) return n.value;
  }
  throw ConfigError(std::string("unknown ") + what + " '" + std::string(name) + "'");
}

// Velocity (vx, vy) of the linear families.
std::array<double, 2> velocity(const SynthConfig& c, MotionFamily f) {
  const double s = c.slow_speed, q = c.fast_speed;
  switch (f) {
    case MotionFamily::right_slow: return {s, 0};
    case MotionFamily::right_fast: return {q, 0};
    case MotionFamily::left_slow: return {-s, 0};
    case MotionFamily::left_fast: return {-q, 0};
    case MotionFamily::down_slow: return {0, s};
    case MotionFamily::down_fast: return {0, q};
    case MotionFamily::up_slow: return {0, -s};
    case MotionFamily::up_fast: return {0, -q};
    default: return {0, 0};
  }
}

bool is_oscillation(MotionFamily f) {
  return f == MotionFamily::oscillate_horizontal || f == MotionFamily::oscillate_vertical;
}

double free_extent(const SynthConfig& c) {
  return static_cast<double>(c.frame_size) - static_cast<double>(c.sprite_size);
}

// Required travel along the motion axis for a family.
double travel(const SynthConfig& c, MotionFamily f) {
  if (is_oscillation(f)) return 2.0 * c.oscillation_amplitude;
  const auto v = velocity(c, f);
  return std::max(std::abs(v[0]), std::abs(v[1])) * static_cast<double>(c.frames_per_video - 1);
}

double coverage(Shape2D shape, double u, double v) {
  const double du = u - 0.5, dv = v - 0.5;
  switch (shape) {
    case Shape2D::square: return std::abs(du) <= 0.42 && std::abs(dv) <= 0.42;
    case Shape2D::disc: return du * du + dv * dv <= 0.45 * 0.45;
    case Shape2D::triangle: return v >= 0.08 && v <= 0.92 && std::abs(du) <= 0.46 * (v - 0.08) / 0.84;
    case Shape2D::cross:
      return std::abs(du) <= 0.46 && std::abs(dv) <= 0.46 && (std::abs(du) <= 0.16 || std::abs(dv) <= 0.16);
    case Shape2D::ring: {
      const double r2 = du * du + dv * dv;
      return r2 <= 0.46 * 0.46 && r2 >= 0.24 * 0.24;
    }
    case Shape2D::diamond: return std::abs(du) + std::abs(dv) <= 0.48;
  }
  return 0.0;
}

// Smooth random texture: bilinear upsampling of a coarse random color grid
// plus a little per-pixel grain.
std::vector<double> texture(std::uint64_t seed, std::size_t size) {
  Rng rng(seed);
  std::uniform_real_distribution<double> coarse(0.1, 0.9), grain(-0.06, 0.06);
  const std::size_t cell = 4;
  const std::size_t grid = size / cell + 2;
  std::vector<double> g(grid * grid * 3);
  for (auto& v : g) v = coarse(rng);
  std::vector<double> out(size * size * 3);
  for (std::size_t y = 0; y < size; ++y) {
    const double gy = (static_cast<double>(y) + 0.5) / cell;
    const auto y0 = static_cast<std::size_t>(gy);
    const double fy = gy - static_cast<double>(y0);
    for (std::size_t x = 0; x < size; ++x) {
      const double gx = (static_cast<double>(x) + 0.5) / cell;
      const auto x0 = static_cast<std::size_t>(gx);
      const double fx = gx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        auto at = [&](std::size_t yy, std::size_t xx) { return g[(yy * grid + xx) * 3 + c]; };
        const double v = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                         fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
        out[(y * size + x) * 3 + c] = std::clamp(v + grain(rng), 0.0, 1.0);
      }
    }
  }
  return out;
}

std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  if (m == 1) return 0;
  const std::ptrdiff_t period = 2 * (m - 1);
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < m ? i : period - i);
}

std::string hex_color(const Rgb& c) {
  char buf[8];
  auto byte = [](double v) { return static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
  std::snprintf(buf, sizeof buf, "%02x%02x%02x", byte(c[0]), byte(c[1]), byte(c[2]));
  return buf;
}

}  // namespace

std::string_view to_string(Task t) {
  switch (t) {
    case Task::motion_labels: return "motion_labels";
    case Task::appearance_labels: return "appearance_labels";
    case Task::mixed_labels: return "mixed_labels";
  }
  return "?";
}

std::string_view to_string(Background b) {
  switch (b) {
    case Background::plain: return "plain";
    case Background::textured: return "textured";
    case Background::shuffled_across_classes: return "shuffled_across_classes";
  }
  return "?";
}

std::string_view to_string(MotionFamily f) { return lookup_name(kMotionNames, f); }
std::string_view to_string(Shape2D s) { return lookup_name(kShapeNames, s); }

Task parse_task(std::string_view s) {
  if (s == "motion_labels") return Task::motion_labels;
  if (s == "appearance_labels") return Task::appearance_labels;
  if (s == "mixed_labels") return Task::mixed_labels;
  throw ConfigError("unknown task '" + std::string(s) + "'");
}

Background parse_background(std::string_view s) {
  if (s == "plain") return Background::plain;
  if (s == "textured") return Background::textured;
  if (s == "shuffled_across_classes") return Background::shuffled_across_classes;
  throw ConfigError("unknown background '" + std::string(s) + "'");
}

MotionFamily parse_motion_family(std::string_view s) { return lookup_value(kMotionNames, s, "motion family"); }
Shape2D parse_shape(std::string_view s) { return lookup_value(kShapeNames, s, "shape"); }

const std::vector<MotionFamily>& default_motion_order() {
  static const std::vector<MotionFamily> order{
      MotionFamily::right_fast, MotionFamily::left_fast,  MotionFamily::up_fast,
      MotionFamily::down_fast,  MotionFamily::oscillate_horizontal, MotionFamily::oscillate_vertical,
      MotionFamily::right_slow, MotionFamily::left_slow,  MotionFamily::up_slow,
      MotionFamily::down_slow};
  return order;
}

std::vector<MotionFamily> SynthConfig::resolved_motion_families() const {
  std::size_t wanted = 0;
  switch (task) {
    case Task::motion_labels: wanted = num_classes; break;
    case Task::mixed_labels: wanted = num_classes / std::max<std::size_t>(1, mixed_appearance_classes); break;
    case Task::appearance_labels: wanted = default_motion_order().size(); break;
  }
  if (!motion_families.empty()) return motion_families;
  if (wanted > default_motion_order().size()) {
    throw ConfigError("synth: at most " + std::to_string(default_motion_order().size()) +
                      " motion families are available");
  }
  return {default_motion_order().begin(),
          default_motion_order().begin() + static_cast<std::ptrdiff_t>(wanted)};
}

std::vector<Appearance> SynthConfig::resolved_appearance_classes() const {
  const std::size_t wanted = task == Task::appearance_labels ? num_classes
                             : task == Task::mixed_labels   ? mixed_appearance_classes
                                                            : 0;
  if (!appearance_classes.empty()) return appearance_classes;
  if (wanted > shapes.size() * colors.size()) {
    throw ConfigError("synth: " + std::to_string(wanted) + " appearance classes need more than " +
                      std::to_string(shapes.size()) + " shapes x " + std::to_string(colors.size()) +
                      " colors");
  }
  std::vector<Appearance> out;
  for (std::size_t k = 0; k < wanted; ++k) {
    out.push_back({shapes[k / colors.size()], colors[k % colors.size()]});
  }
  return out;
}

void SynthConfig::validate() const {
  if (num_classes < 1) throw ConfigError("synth: num_classes must be >= 1");
  if (videos_per_class < 1) throw ConfigError("synth: videos_per_class must be >= 1");
  if (frames_per_video < 17) throw ConfigError("synth: frames_per_video must be >= 17");
  if (sprite_size < 2) throw ConfigError("synth: sprite_size must be >= 2");
  if (frame_size < sprite_size + 1) throw ConfigError("synth: frame size too small for sprite");
  if (shapes.empty() || colors.empty()) throw ConfigError("synth: shape and color pools must be non-empty");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("synth: val_fraction must be in [0, 1)");
  if (background == Background::shuffled_across_classes && background_bank < 1) {
    throw ConfigError("synth: background_bank must be >= 1");
  }
  for (const auto& c : colors) {
    for (double v : c) {
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("synth: colors must lie in [0, 1]");
    }
  }
  if (!(slow_speed > 0.0 && fast_speed > 0.0 && oscillation_amplitude >= 0.0 && oscillation_period > 0.0)) {
    throw ConfigError("synth: speeds and oscillation period must be positive");
  }

  const auto families = resolved_motion_families();
  const auto looks = resolved_appearance_classes();
  if (task == Task::motion_labels && families.size() != num_classes) {
    throw ConfigError("synth: motion_labels needs one motion family per class");
  }
  if (task == Task::appearance_labels && looks.size() != num_classes) {
    throw ConfigError("synth: appearance_labels needs one appearance per class");
  }
  if (task == Task::mixed_labels) {
    if (mixed_appearance_classes < 1 || num_classes % mixed_appearance_classes != 0) {
      throw ConfigError("synth: mixed_labels needs num_classes divisible by mixed_appearance_classes");
    }
    if (families.size() * looks.size() != num_classes) {
      throw ConfigError("synth: mixed_labels needs motion families x appearances == num_classes");
    }
  }
  const double room = free_extent(*this);
  for (auto f : families) {
    if (travel(*this, f) > room) {
      throw ConfigError("synth: frame size too small for sprite: " + std::string(to_string(f)) +
                        " travels " + std::to_string(travel(*this, f)) + " px, only " +
                        std::to_string(room) + " px free");
    }
  }
}

std::vector<std::string> SynthConfig::class_names() const {
  const auto families = resolved_motion_families();
  const auto looks = resolved_appearance_classes();
  auto look_name = [](const Appearance& a) { return std::string(to_string(a.shape)) + "_" + hex_color(a.color); };
  std::vector<std::string> names;
  for (std::size_t k = 0; k < num_classes; ++k) {
    switch (task) {
      case Task::motion_labels: names.emplace_back(to_string(families[k])); break;
      case Task::appearance_labels: names.push_back(look_name(looks[k])); break;
      case Task::mixed_labels: {
        const std::size_t a = mixed_appearance_classes;
        names.push_back(std::string(to_string(families[k / a])) + "+" + look_name(looks[k % a]));
        break;
      }
    }
  }
  return names;
}

std::string SynthConfig::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "task=" << to_string(task) << '\n'
     << "num_classes=" << num_classes << '\n'
     << "videos_per_class=" << videos_per_class << '\n'
     << "frames_per_video=" << frames_per_video << '\n'
     << "frame_size=" << frame_size << '\n'
     << "sprite_size=" << sprite_size << '\n'
     << "background=" << to_string(background) << '\n'
     << "background_bank=" << background_bank << '\n'
     << "camera_jitter_px=" << camera_jitter_px << '\n'
     << "slow_speed=" << slow_speed << '\n'
     << "fast_speed=" << fast_speed << '\n'
     << "oscillation_amplitude=" << oscillation_amplitude << '\n'
     << "oscillation_period=" << oscillation_period << '\n'
     << "shapes=";
  for (std::size_t i = 0; i < shapes.size(); ++i) os << (i ? "," : "") << to_string(shapes[i]);
  os << "\ncolors=";
  for (std::size_t i = 0; i < colors.size(); ++i) os << (i ? "," : "") << hex_color(colors[i]);
  os << "\nappearance_classes=";
  for (std::size_t i = 0; i < appearance_classes.size(); ++i) {
    os << (i ? "," : "") << to_string(appearance_classes[i].shape) << ":" << hex_color(appearance_classes[i].color);
  }
  os << "\nmotion_families=";
  for (std::size_t i = 0; i < motion_families.size(); ++i) os << (i ? "," : "") << to_string(motion_families[i]);
  os << "\nmixed_appearance_classes=" << mixed_appearance_classes << '\n'
     << "val_fraction=" << val_fraction << '\n'
     << "seed=" << seed << '\n';
  return os.str();
}

std::array<double, 2> sprite_position(const SynthConfig& config, const GenerationTrace& trace,
                                      std::size_t t) {
  const double tt = static_cast<double>(t);
  if (is_oscillation(trace.motion)) {
    const double offset = config.oscillation_amplitude *
                          std::sin(2.0 * std::numbers::pi * tt / config.oscillation_period + trace.phase);
    if (trace.motion == MotionFamily::oscillate_horizontal) return {trace.start_x + offset, trace.start_y};
    return {trace.start_x, trace.start_y + offset};
  }
  const auto v = velocity(config, trace.motion);
  return {trace.start_x + v[0] * tt, trace.start_y + v[1] * tt};
}

Tensor render(const SynthConfig& config, const GenerationTrace& trace) {
  const std::size_t n = config.frame_size, frames = config.frames_per_video;
  if (trace.jitter.size() != frames) throw std::invalid_argument("render: jitter length != frame count");
  std::vector<double> bg;
  if (config.background == Background::plain) {
    bg.resize(n * n * 3);
    for (std::size_t i = 0; i < n * n; ++i) {
      for (std::size_t c = 0; c < 3; ++c) bg[i * 3 + c] = trace.plain_color[c];
    }
  } else {
    bg = texture(trace.background_seed, n);
  }

  constexpr int kSuper = 4;
  const double sprite = static_cast<double>(config.sprite_size);
  Tensor out({frames, n, n, 3});
  std::vector<double> canvas(n * n * 3);
  for (std::size_t t = 0; t < frames; ++t) {
    canvas = bg;
    const auto [x0, y0] = sprite_position(config, trace, t);
    const auto ylo = static_cast<std::size_t>(std::max(0.0, std::floor(y0)));
    const auto xlo = static_cast<std::size_t>(std::max(0.0, std::floor(x0)));
    const std::size_t yhi = std::min(n, static_cast<std::size_t>(std::max(0.0, std::ceil(y0 + sprite))));
    const std::size_t xhi = std::min(n, static_cast<std::size_t>(std::max(0.0, std::ceil(x0 + sprite))));
    for (std::size_t y = ylo; y < yhi; ++y) {
      for (std::size_t x = xlo; x < xhi; ++x) {
        int hits = 0;
        for (int sy = 0; sy < kSuper; ++sy) {
          const double v = (static_cast<double>(y) + (sy + 0.5) / kSuper - y0) / sprite;
          for (int sx = 0; sx < kSuper; ++sx) {
            const double u = (static_cast<double>(x) + (sx + 0.5) / kSuper - x0) / sprite;
            if (u >= 0.0 && u < 1.0 && v >= 0.0 && v < 1.0 && coverage(trace.appearance.shape, u, v) > 0.0) ++hits;
          }
        }
        if (!hits) continue;
        const double a = static_cast<double>(hits) / (kSuper * kSuper);
        for (std::size_t c = 0; c < 3; ++c) {
          double& px = canvas[(y * n + x) * 3 + c];
          px = (1.0 - a) * px + a * trace.appearance.color[c];
        }
      }
    }
    // Global camera shift with mirrored borders.
    const auto [dy, dx] = trace.jitter[t];
    double* dst = out.data() + t * n * n * 3;
    for (std::size_t y = 0; y < n; ++y) {
      const std::size_t sy = reflect(static_cast<std::ptrdiff_t>(y) - dy, n);
      for (std::size_t x = 0; x < n; ++x) {
        const std::size_t sx = reflect(static_cast<std::ptrdiff_t>(x) - dx, n);
        for (std::size_t c = 0; c < 3; ++c) dst[(y * n + x) * 3 + c] = canvas[(sy * n + sx) * 3 + c];
      }
    }
  }
  return out;
}

namespace {

GenerationTrace make_trace(const SynthConfig& c, std::uint64_t video_seed, int label,
                           const std::vector<MotionFamily>& families,
                           const std::vector<Appearance>& looks) {
  Rng rng(video_seed);
  GenerationTrace tr;
  tr.video_seed = video_seed;
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  const auto k = static_cast<std::size_t>(label);

  switch (c.task) {
    case Task::motion_labels:
      tr.motion = families[k];
      tr.appearance = {c.shapes[pick(c.shapes.size())], c.colors[pick(c.colors.size())]};
      break;
    case Task::appearance_labels:
      tr.motion = families[pick(families.size())];
      tr.appearance = looks[k];
      break;
    case Task::mixed_labels:
      tr.motion = families[k / c.mixed_appearance_classes];
      tr.appearance = looks[k % c.mixed_appearance_classes];
      break;
  }

  const double room = free_extent(c);
  std::uniform_real_distribution<double> anywhere(0.0, room);
  const double along = travel(c, tr.motion);
  if (is_oscillation(tr.motion)) {
    std::uniform_real_distribution<double> center(c.oscillation_amplitude, room - c.oscillation_amplitude);
    const double cross = anywhere(rng), axis = center(rng);
    tr.phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
    if (tr.motion == MotionFamily::oscillate_horizontal) {
      tr.start_x = axis;
      tr.start_y = cross;
    } else {
      tr.start_x = cross;
      tr.start_y = axis;
    }
  } else {
    const auto v = velocity(c, tr.motion);
    const double cross = anywhere(rng);
    const double base = std::uniform_real_distribution<double>(0.0, room - along)(rng);
    // Moving in the negative direction starts at the far end.
    const double axis_start = (v[0] < 0 || v[1] < 0) ? base + along : base;
    if (v[0] != 0.0) {
      tr.start_x = axis_start;
      tr.start_y = cross;
    } else {
      tr.start_x = cross;
      tr.start_y = axis_start;
    }
  }

  std::uniform_real_distribution<double> shade(0.15, 0.85);
  for (auto& v : tr.plain_color) v = shade(rng);
  if (c.background == Background::shuffled_across_classes) {
    tr.background_seed = derive_seed(c.seed, kBankStream, pick(c.background_bank));
  } else {
    tr.background_seed = rng();
  }
  const int j = static_cast<int>(c.camera_jitter_px);
  std::uniform_int_distribution<int> shift(-j, j);
  tr.jitter.resize(c.frames_per_video);
  for (auto& d : tr.jitter) {
    d[0] = shift(rng);
    d[1] = shift(rng);
  }
  return tr;
}

std::string video_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "videos/v%05zu", i);
  return buf;
}

}  // namespace

SynthDataset::SynthDataset(SynthConfig config, std::vector<SynthVideo> videos, std::vector<std::size_t> train,
                           std::vector<std::size_t> val)
    : config_(std::move(config)), videos_(std::move(videos)), train_(std::move(train)), val_(std::move(val)) {
  for (const auto& v : videos_) {
    records_.push_back({v.id, v.label, v.frames.dim(0), {}});
  }
}

Tensor SynthDataset::load_frames(std::size_t index, std::size_t begin, std::size_t end) const {
  if (index >= videos_.size()) throw std::out_of_range("video index out of range");
  const Tensor& f = videos_[index].frames;
  if (begin >= end || end > f.dim(0)) {
    throw std::out_of_range("frames [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " +
                            videos_[index].id + " with " + std::to_string(f.dim(0)) + " frames");
  }
  const std::size_t plane = f.dim(1) * f.dim(2) * f.dim(3);
  Tensor out({end - begin, f.dim(1), f.dim(2), f.dim(3)});
  std::copy(f.data() + begin * plane, f.data() + end * plane, out.data());
  return out;
}

SynthDataset generate(const SynthConfig& config) {
  config.validate();
  const auto families = config.resolved_motion_families();
  const auto looks = config.resolved_appearance_classes();
  const std::size_t k = config.num_classes;
  const std::size_t total = k * config.videos_per_class;

  std::vector<SynthVideo> videos(total);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(total); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    SynthVideo& v = videos[i];
    v.id = video_id(i);
    v.label = static_cast<int>(i % k);
    v.trace = make_trace(config, derive_seed(config.seed, kVideoStream, i), v.label, families, looks);
    v.frames = render(config, v.trace);
  }

  // Stratified split: the same number of validation videos from every class.
  const auto n_val = static_cast<std::size_t>(
      std::lround(static_cast<double>(config.videos_per_class) * config.val_fraction));
  Rng split_rng(derive_seed(config.seed, kSplitStream, 0));
  std::vector<bool> is_val(total, false);
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t j = 0; j < config.videos_per_class; ++j) members.push_back(j * k + c);
    std::shuffle(members.begin(), members.end(), split_rng);
    for (std::size_t j = 0; j < n_val; ++j) is_val[members[j]] = true;
  }
  std::vector<std::size_t> train, val;
  for (std::size_t i = 0; i < total; ++i) (is_val[i] ? val : train).push_back(i);
  return SynthDataset(config, std::move(videos), std::move(train), std::move(val));
}

void export_dataset(const SynthDataset& dataset, const fs::path& root) {
  std::error_code ec;
  fs::create_directories(root / "videos", ec);
  if (ec) throw DataError("cannot create " + (root / "videos").string() + ": " + ec.message());

  for (const auto& v : dataset.videos()) {
    const fs::path dir = root / v.id;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
    const std::size_t h = v.frames.dim(1), w = v.frames.dim(2);
    for (std::size_t t = 0; t < v.frames.dim(0); ++t) {
      framestore::Image8 img{h, w, std::vector<std::uint8_t>(h * w * 3)};
      const double* src = v.frames.data() + t * h * w * 3;
      for (std::size_t i = 0; i < img.rgb.size(); ++i) {
        img.rgb[i] = static_cast<std::uint8_t>(std::lround(std::clamp(src[i], 0.0, 1.0) * 255.0));
      }
      char name[32];
      std::snprintf(name, sizeof name, "frame_%05zu.ppm", t);
      framestore::write_ppm(dir / name, img);
    }
  }

  auto write_list = [&](const fs::path& path, const std::vector<std::size_t>& indices) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "# relative_path\tlabel\n";
    for (auto i : indices) out << dataset.videos()[i].id << '\t' << dataset.videos()[i].label << '\n';
    if (!out) throw DataError("write failed for " + path.string());
  };
  std::vector<std::size_t> all(dataset.videos().size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  write_list(root / "manifest.txt", all);
  write_list(root / "train.txt", dataset.train_indices());
  write_list(root / "val.txt", dataset.val_indices());

  std::ofstream classes(root / "classes.txt");
  if (!classes) throw DataError("cannot write " + (root / "classes.txt").string());
  for (const auto& name : dataset.config().class_names()) classes << name << '\n';
}

std::vector<std::size_t> split_indices(const framestore::FrameSource& source, const fs::path& split_file) {
  std::ifstream in(split_file);
  if (!in) throw DataError("cannot open " + split_file.string());
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < source.size(); ++i) by_id[source.records()[i].id] = i;
  std::vector<std::size_t> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    const std::string id = line.substr(0, line.find('\t'));
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError(split_file.string() + ": unknown video '" + id + "'");
    out.push_back(it->second);
  }
  return out;
}

std::vector<std::string> read_class_names(const fs::path& root, std::size_t num_classes) {
  std::ifstream in(root / "classes.txt");
  std::vector<std::string> names;
  std::string line;
  while (in && std::getline(in, line)) {
    if (!line.empty()) names.push_back(line);
  }
  if (names.size() != num_classes) {
    names.clear();
    for (std::size_t c = 0; c < num_classes; ++c) names.push_back("class_" + std::to_string(c));
  }
  return names;
}

}  // namespace resmotion::synthgen
