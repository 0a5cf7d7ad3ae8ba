#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "resmotion/core/errors.hpp"
#include "resmotion/models/model.hpp"
#include "test_support.hpp"

using namespace resmotion;
using namespace resmotion::models;
using resmotion::testing::random_tensor;
using resmotion::testing::TempDir;
namespace fs = std::filesystem;

namespace {

// Parameter count from the architecture description, counted independently
// of the model code: convs and the classifier carry biases, BN has gamma and
// beta, projection shortcuts are 1x1 convs followed by BN.
std::size_t expected_parameters(const ModelConfig& c) {
  const bool flat = c.path == PathKind::appearance2d;
  const std::size_t k3 = flat ? 9 : 27, stem_k = flat ? 49 : 147;
  auto conv = [](std::size_t ci, std::size_t co, std::size_t k) { return co * ci * k + co; };
  const std::size_t bn = c.batchnorm ? 2 : 0;
  std::size_t widths[4];
  for (int s = 0; s < 4; ++s) widths[s] = static_cast<std::size_t>(std::lround(c.width_multiplier * (64u << s)));
  std::size_t n = conv(c.input_shape[0], widths[0], stem_k) + bn * widths[0];
  std::size_t ch = widths[0];
  for (int s = 0; s < 4; ++s) {
    for (std::size_t b = 0; b < c.blocks_per_stage; ++b) {
      const std::size_t co = widths[s];
      n += conv(ch, co, k3) + bn * co + conv(co, co, k3) + bn * co;
      const bool down = s > 0 && b == 0;
      const bool strided = down && c.downsample == Downsample::stride;
      if (strided || ch != co) n += conv(ch, co, 1) + bn * co;
      ch = co;
    }
  }
  return n + ch * c.num_classes + c.num_classes;
}

ModelConfig tiny_motion(Downsample d) {
  ModelConfig c = ModelConfig::desk_motion(5);
  c.downsample = d;
  return c;
}

}  // namespace

TEST(ModelConfig, StageWidths) {
  EXPECT_EQ(ModelConfig::full_motion(101).stage_widths(), (std::vector<std::size_t>{64, 128, 256, 512}));
  EXPECT_EQ(ModelConfig::desk_motion(4).stage_widths(), (std::vector<std::size_t>{8, 16, 32, 64}));
}

TEST(ModelConfig, ValidationAndHash) {
  ModelConfig c = ModelConfig::desk_motion(4);
  EXPECT_NO_THROW(c.validate());
  ModelConfig d = c;
  d.activation = nn::Activation::relu;
  EXPECT_NE(c.hash(), d.hash());
  d = c;
  d.width_multiplier = 0.0;
  EXPECT_THROW(d.validate(), ConfigError);
  d = c;
  d.input_shape = {3, 24, 24};
  EXPECT_THROW(d.validate(), ConfigError);
  EXPECT_THROW(parse_downsample("avg"), ConfigError);
}

TEST(Model, ParameterCountMatchesArchitecture) {
  for (auto d : {Downsample::stride, Downsample::pool}) {
    ModelConfig c = ModelConfig::desk_motion(7);
    c.downsample = d;
    c.blocks_per_stage = 2;
    c.width_multiplier = 0.25;
    EXPECT_EQ(Model(c).parameter_count(), expected_parameters(c));
  }
  const ModelConfig a = ModelConfig::desk_appearance(7);
  EXPECT_EQ(Model(a).parameter_count(), expected_parameters(a));
}

TEST(Model, StrideAndPoolVariantsHaveNearlyEqualParameterCounts) {
  ModelConfig c = ModelConfig::full_motion(101);
  c.width_multiplier = 0.5;  // keeps the test light; the ratio is width-independent
  c.downsample = Downsample::stride;
  const double stride = static_cast<double>(expected_parameters(c));
  const double built_stride = static_cast<double>(Model(c).parameter_count());
  c.downsample = Downsample::pool;
  const double pool = static_cast<double>(Model(c).parameter_count());
  EXPECT_EQ(built_stride, stride);
  EXPECT_LT(std::abs(stride - pool) / stride, 0.01);
}

TEST(Model, ForwardShapes) {
  std::mt19937_64 rng(1);
  Model pool(tiny_motion(Downsample::pool), 3);
  const Tensor x = random_tensor({2, 3, 8, 24, 24}, rng);
  EXPECT_EQ(pool.forward(x, Mode::train).shape(), (Shape{2, 5}));
  const auto& t = pool.trace();
  EXPECT_EQ(t.front().second, (Shape{2, 8, 8, 12, 12}));
  EXPECT_EQ(t[3].first, "stage1.block0");
  EXPECT_EQ(t[4].second, (Shape{2, 16, 4, 6, 6}));
  EXPECT_EQ(t[5].second, (Shape{2, 32, 2, 3, 3}));
  EXPECT_EQ(t[6].second, (Shape{2, 64, 1, 1, 1}));

  Model stride(tiny_motion(Downsample::stride), 3);
  stride.forward(x, Mode::train);
  EXPECT_EQ(stride.trace()[4].second, (Shape{2, 16, 4, 6, 6}));
  EXPECT_EQ(stride.trace()[6].second, (Shape{2, 64, 1, 2, 2}));

  Model app(ModelConfig::desk_appearance(5), 3);
  EXPECT_EQ(app.forward(random_tensor({2, 3, 24, 24}, rng), Mode::train).shape(), (Shape{2, 5}));
  EXPECT_THROW(app.forward(x, Mode::train), ShapeError);
}

TEST(Model, FeatureDifferenceVariant) {
  std::mt19937_64 rng(2);
  ModelConfig c = tiny_motion(Downsample::pool);
  c.fea_diff = true;
  Model m = build_model(c, 1);
  m.forward(random_tensor({2, 3, 8, 24, 24}, rng), Mode::train);
  EXPECT_EQ(m.trace()[3].first, "fea_diff");
  EXPECT_EQ(m.trace()[3].second, (Shape{2, 8, 7, 12, 12}));
  c.input_shape = {3, 1, 24, 24};
  EXPECT_THROW(build_fea_diff(c), ShapeError);
  ModelConfig a = ModelConfig::desk_appearance(3);
  a.fea_diff = true;
  EXPECT_THROW(build_model(a), ConfigError);
}

TEST(Model, InitializationIsSeeded) {
  Model a(tiny_motion(Downsample::pool), 5), b(tiny_motion(Downsample::pool), 5), c(tiny_motion(Downsample::pool), 6);
  EXPECT_EQ(parameter_hash(a), parameter_hash(b));
  EXPECT_NE(parameter_hash(a), parameter_hash(c));
}

// Whole-network backward on a few parameters, as a wiring check. The pool
// variant needs a smaller step: its many max-pool windows switch argmax
// under a 1e-5 nudge of an early weight.
TEST(Model, BackwardMatchesFiniteDifferencesOnSampledParameters) {
  for (auto [variant, h] : {std::pair{Downsample::stride, 1e-5}, std::pair{Downsample::pool, 1e-6}}) {
    std::mt19937_64 rng(3);
    Model m(tiny_motion(variant), 4);
    const Tensor x = random_tensor({3, 3, 8, 24, 24}, rng);
    const std::vector<int> labels{0, 3, 4};
    auto loss = [&] { return nn::cross_entropy_loss(m.forward(x, Mode::train), labels).loss; };
    m.zero_grad();
    m.backward(nn::cross_entropy_loss(m.forward(x, Mode::train), labels).grad);
    for (const char* name : {"fc.weight", "fc.bias", "stage4.block0.conv2.weight", "stage1.block0.conv1.weight",
                             "stem.conv.weight", "stem.bn.gamma"}) {
      Parameter* p = nullptr;
      for (auto* q : m.parameters()) if (q->name == name) p = q;
      ASSERT_NE(p, nullptr) << name;
      for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t i = (k * 7919) % p->value.size();
        const double keep = p->value[i];
        p->value[i] = keep + h;
        const double up = loss();
        p->value[i] = keep - h;
        const double down = loss();
        p->value[i] = keep;
        const double numeric = (up - down) / (2 * h), analytic = p->grad[i];
        EXPECT_NEAR(analytic, numeric, 1e-4 * std::max(1e-3, std::abs(numeric)))
            << to_string(variant) << " " << name << "[" << i << "]";
      }
    }
  }
}

TEST(ParamFile, RoundTripIsBitExact) {
  TempDir dir("params");
  std::mt19937_64 rng(4);
  Model a(tiny_motion(Downsample::pool), 1);
  a.forward(random_tensor({2, 3, 8, 24, 24}, rng), Mode::train);  // fills BN running stats
  save_params(a, dir.path() / "a.rmp", ParamDType::f64, "note=1\n");
  Model b(tiny_motion(Downsample::pool), 2);
  load_params(b, dir.path() / "a.rmp");
  EXPECT_EQ(parameter_hash(a), parameter_hash(b));
  save_params(b, dir.path() / "b.rmp", ParamDType::f64, "note=1\n");
  std::ifstream fa(dir.path() / "a.rmp", std::ios::binary), fb(dir.path() / "b.rmp", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_EQ(sa, sb);
  EXPECT_EQ(sa.substr(0, 4), "RMP1");

  std::istringstream in(sa);
  const ParamFile f = read_param_file(in);
  EXPECT_EQ(f.metadata, "note=1\n");
  EXPECT_EQ(f.config_hash, a.config().hash());
}

TEST(ParamFile, F32StorageRoundsToFloat) {
  TempDir dir("params32");
  Model a(tiny_motion(Downsample::pool), 1);
  save_params(a, dir.path() / "a.rmp", ParamDType::f32);
  Model b(tiny_motion(Downsample::pool), 2);
  load_params(b, dir.path() / "a.rmp");
  const Tensor& wa = a.tensor("fc.weight");
  const Tensor& wb = b.tensor("fc.weight");
  for (std::size_t i = 0; i < wa.size(); ++i) EXPECT_EQ(wb[i], static_cast<double>(static_cast<float>(wa[i])));
}

TEST(ParamFile, RejectsMismatchAndCorruption) {
  TempDir dir("badparams");
  Model a(tiny_motion(Downsample::pool), 1);
  save_params(a, dir.path() / "a.rmp");
  Model other(tiny_motion(Downsample::stride), 1);
  EXPECT_THROW(load_params(other, dir.path() / "a.rmp"), FormatError);
  fs::resize_file(dir.path() / "a.rmp", fs::file_size(dir.path() / "a.rmp") - 8);
  Model b(tiny_motion(Downsample::pool), 1);
  EXPECT_THROW(load_params(b, dir.path() / "a.rmp"), FormatError);
  std::ofstream(dir.path() / "junk.rmp") << "nope";
  EXPECT_THROW(load_params(b, dir.path() / "junk.rmp"), FormatError);
  EXPECT_THROW(load_params(b, dir.path() / "missing.rmp"), DataError);
}
