#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "memory_source.hpp"
#include "resmotion/core/errors.hpp"
#include "resmotion/evalfuse/evaluation.hpp"

using namespace resmotion;
using namespace resmotion::evalfuse;
using resmotion::testing::TempDir;

namespace {

Prediction pred(std::string id, std::vector<double> probs, PathTag tag = PathTag::motion) {
  return Prediction{std::move(id), std::move(probs), tag, 5};
}

std::vector<double> random_probs(std::size_t k, std::mt19937_64& rng) {
  std::vector<double> p(k);
  std::gamma_distribution<double> g(1.0, 1.0);
  double s = 0.0;
  for (auto& v : p) s += (v = g(rng));
  for (auto& v : p) v /= s;
  return p;
}

// Straightforward scoring written independently of evaluate(): a label is in
// the top k when fewer than k classes outrank it (higher probability, or equal
// probability and lower index).
struct Oracle {
  double top1 = 0, top5 = 0;
  std::vector<double> per_class;
};

Oracle score(const std::vector<Prediction>& preds, const std::map<std::string, int>& labels, std::size_t k) {
  Oracle o;
  std::vector<double> hit(k, 0), count(k, 0);
  for (const auto& p : preds) {
    const int y = labels.at(p.video_id);
    std::size_t above = 0;
    for (std::size_t j = 0; j < k; ++j) {
      if (p.probs[j] > p.probs[y] || (p.probs[j] == p.probs[y] && j < static_cast<std::size_t>(y))) ++above;
    }
    o.top1 += above == 0;
    o.top5 += above < 5;
    hit[y] += above == 0;
    count[y] += 1;
  }
  o.top1 /= static_cast<double>(preds.size());
  o.top5 /= static_cast<double>(preds.size());
  for (std::size_t c = 0; c < k; ++c) o.per_class.push_back(count[c] > 0 ? hit[c] / count[c] : 0.0);
  return o;
}

}  // namespace

TEST(Fuse, AveragesProbabilities) {
  const Prediction f = fuse(pred("v", {0.2, 0.8}), pred("v", {0.6, 0.4}, PathTag::appearance));
  EXPECT_DOUBLE_EQ(f.probs[0], 0.4);
  EXPECT_DOUBLE_EQ(f.probs[1], 0.6);
  EXPECT_EQ(f.tag, PathTag::fused);
  EXPECT_EQ(f.clips_aggregated, 10u);
}

TEST(Fuse, PropertiesOnRandomInputs) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const Prediction a = pred("v", random_probs(7, rng)), b = pred("v", random_probs(7, rng));
    const Prediction ab = fuse(a, b), ba = fuse(b, a);
    EXPECT_EQ(ab.probs, ba.probs);                 // symmetric
    EXPECT_EQ(fuse(a, a).probs, a.probs);          // idempotent
    double s = 0.0;
    for (std::size_t k = 0; k < 7; ++k) {
      s += ab.probs[k];
      EXPECT_GE(ab.probs[k], std::min(a.probs[k], b.probs[k]));
      EXPECT_LE(ab.probs[k], std::max(a.probs[k], b.probs[k]));
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Fuse, RejectsMismatches) {
  EXPECT_THROW(fuse(pred("a", {1, 0}), pred("b", {1, 0})), std::invalid_argument);
  EXPECT_THROW(fuse(pred("a", {1, 0}), pred("a", {1, 0, 0})), std::invalid_argument);
  const std::vector<Prediction> a{pred("x", {1, 0}), pred("y", {0, 1})}, b{pred("y", {1, 0}), pred("z", {0, 1})};
  EXPECT_THROW(fuse_all(a, b), DataError);
  const std::vector<Prediction> c{pred("y", {1, 0}), pred("x", {0, 1})};
  const auto f = fuse_all(a, c);
  EXPECT_EQ(f[0].video_id, "x");
  EXPECT_DOUBLE_EQ(f[0].probs[0], 0.5);
  const Prediction w = fuse_weighted(pred("v", {1, 0}), pred("v", {0, 1}), 0.75);
  EXPECT_DOUBLE_EQ(w.probs[0], 0.75);
}

TEST(Evaluate, WorkedExample) {
  // Three classes, four videos: two right at top 1, one right at top 2.
  const std::vector<Prediction> p{pred("a", {0.7, 0.2, 0.1}), pred("b", {0.1, 0.6, 0.3}),
                                  pred("c", {0.5, 0.4, 0.1}), pred("d", {0.2, 0.3, 0.5})};
  const std::map<std::string, int> y{{"a", 0}, {"b", 1}, {"c", 1}, {"d", 0}};
  const EvalReport r = evaluate(p, y, 3);
  EXPECT_DOUBLE_EQ(r.top1, 0.5);
  EXPECT_DOUBLE_EQ(r.top5, 1.0);
  EXPECT_EQ(r.per_category_acc, (std::vector<double>{0.5, 0.5, 0.0}));
  EXPECT_EQ(r.per_category_count, (std::vector<std::size_t>{2, 2, 0}));
  EXPECT_EQ(r.confusion[0], (std::vector<std::size_t>{1, 0, 1}));
  EXPECT_EQ(r.confusion[1], (std::vector<std::size_t>{1, 1, 0}));
  EXPECT_EQ(r.num_videos, 4u);
}

TEST(Evaluate, TiesGoToTheLowerClassIndex) {
  EXPECT_EQ(ranked_classes(std::vector<double>{0.25, 0.5, 0.25, 0.0}), (std::vector<std::size_t>{1, 0, 2, 3}));
  const std::vector<Prediction> p{pred("a", {0.5, 0.5})};
  EXPECT_DOUBLE_EQ(evaluate(p, {{"a", 0}}, 2).top1, 1.0);
  EXPECT_DOUBLE_EQ(evaluate(p, {{"a", 1}}, 2).top1, 0.0);
}

TEST(Evaluate, MatchesIndependentScoring) {
  std::mt19937_64 rng(2);
  for (std::size_t k : {3u, 8u, 12u}) {
    std::vector<Prediction> preds;
    std::map<std::string, int> labels;
    for (int i = 0; i < 60; ++i) {
      auto probs = random_probs(k, rng);
      if (i % 7 == 0) probs.assign(k, 1.0 / static_cast<double>(k));  // all tied
      preds.push_back(pred("v" + std::to_string(i), probs));
      labels["v" + std::to_string(i)] = static_cast<int>(rng() % k);
    }
    const EvalReport r = evaluate(preds, labels, k);
    const Oracle o = score(preds, labels, k);
    EXPECT_DOUBLE_EQ(r.top1, o.top1);
    EXPECT_DOUBLE_EQ(r.top5, o.top5);
    for (std::size_t c = 0; c < k; ++c) EXPECT_DOUBLE_EQ(r.per_category_acc[c], o.per_class[c]);
  }
}

TEST(Evaluate, RejectsIncompleteOrDuplicatePredictions) {
  const std::map<std::string, int> y{{"a", 0}, {"b", 1}};
  EXPECT_THROW(evaluate(std::vector<Prediction>{pred("a", {1, 0})}, y, 2), DataError);
  EXPECT_THROW(evaluate(std::vector<Prediction>{pred("a", {1, 0}), pred("a", {1, 0})}, y, 2), DataError);
  EXPECT_THROW(evaluate(std::vector<Prediction>{pred("a", {1, 0}), pred("c", {1, 0})}, y, 2), DataError);
}

TEST(Pearson, KnownValuesAndInvariances) {
  const std::vector<double> a{1, 2, 3}, b{2, 4, 7};
  EXPECT_NEAR(pearson_correlation(a, b), 0.9933992677987828, 1e-12);
  EXPECT_DOUBLE_EQ(pearson_correlation(a, a), 1.0);
  const std::vector<double> neg{-1, -2, -3};
  EXPECT_DOUBLE_EQ(pearson_correlation(a, neg), -1.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> x(9), y(9), z(9);
    for (std::size_t j = 0; j < 9; ++j) {
      x[j] = u(rng);
      y[j] = u(rng);
      z[j] = 3.5 * y[j] - 2.0;
    }
    const double r = pearson_correlation(x, y);
    EXPECT_NEAR(pearson_correlation(x, z), r, 1e-12);
    EXPECT_NEAR(pearson_correlation(y, x), r, 1e-15);
    EXPECT_LE(std::abs(r), 1.0);
  }
}

TEST(Pearson, RejectsDegenerateInputs) {
  const std::vector<double> flat{0.5, 0.5, 0.5}, a{1, 2, 3};
  try {
    pearson_correlation(flat, a);
    FAIL();
  } catch (const std::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("undefined correlation"), std::string::npos);
  }
  EXPECT_THROW(pearson_correlation(std::vector<double>{1, 2}, a), std::invalid_argument);
  EXPECT_THROW(pearson_correlation(std::vector<double>{1}, std::vector<double>{2}), std::invalid_argument);
}

TEST(Difference, RankedBestAndWorst) {
  EvalReport a, b;
  a.per_category_acc = {0.9, 0.1, 0.5, 0.5, 0.2, 0.8, 0.3};
  b.per_category_acc = {0.2, 0.6, 0.5, 0.4, 0.2, 0.1, 0.9};
  a.per_category_count = b.per_category_count = std::vector<std::size_t>(7, 10);
  const std::vector<std::string> names{"c0", "c1", "c2", "c3", "c4", "c5", "c6"};
  const DifferenceReport d = accuracy_difference_report(a, b, names);
  ASSERT_EQ(d.ranked.size(), 7u);
  EXPECT_EQ(d.ranked[0].name, "c5");
  EXPECT_NEAR(d.ranked[0].diff, 0.7, 1e-12);
  EXPECT_EQ(d.ranked[1].name, "c0");
  // c2 and c4 tie at 0: lower index first.
  EXPECT_EQ(d.ranked[3].category, 2u);
  EXPECT_EQ(d.ranked[4].category, 4u);
  EXPECT_EQ(d.best(2).back().name, "c0");
  EXPECT_EQ(d.worst(1).front().name, "c6");
  EXPECT_EQ(d.best().size(), 5u);
  EXPECT_NE(format_difference(d, 0.25).find("pearson_r"), std::string::npos);
}

TEST(Files, PredictionsAndReportsRoundTrip) {
  TempDir dir("eval");
  std::mt19937_64 rng(4);
  std::vector<Prediction> preds;
  std::map<std::string, int> labels;
  for (int i = 0; i < 10; ++i) {
    preds.push_back(pred("videos/v" + std::to_string(i), random_probs(4, rng), PathTag::appearance));
    labels["videos/v" + std::to_string(i)] = i % 4;
  }
  write_predictions(dir.path() / "p.jsonl", preds);
  const auto back = read_predictions(dir.path() / "p.jsonl");
  ASSERT_EQ(back.size(), preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    EXPECT_EQ(back[i].video_id, preds[i].video_id);
    EXPECT_EQ(back[i].probs, preds[i].probs);  // bit-exact through JSON
    EXPECT_EQ(back[i].tag, PathTag::appearance);
  }
  const EvalReport r = evaluate(preds, labels, 4);
  write_report(dir.path() / "r.txt", r);
  const EvalReport rb = read_report(dir.path() / "r.txt");
  EXPECT_EQ(rb.top1, r.top1);
  EXPECT_EQ(rb.per_category_acc, r.per_category_acc);
  EXPECT_EQ(rb.confusion, r.confusion);
  EXPECT_NE(format_report(r, default_class_names(4)).find("class_3"), std::string::npos);
  std::ofstream(dir.path() / "bad.jsonl") << "{\"video_id\": 3}\n";
  EXPECT_THROW(read_predictions(dir.path() / "bad.jsonl"), DataError);
}

TEST(Predict, AveragesClipSoftmaxInEvalMode) {
  std::mt19937_64 gen(5);
  auto src = resmotion::testing::random_videos(2, 12, 20, 20, 3, gen);
  motioninput::ClipSpec cs;
  cs.frames = 4;
  cs.resize_height = cs.resize_width = 18;
  cs.crop_height = cs.crop_width = 16;
  const motioninput::InputPipeline pipe(cs);
  models::ModelConfig mc = models::ModelConfig::desk_motion(3);
  mc.input_shape = {3, 4, 16, 16};
  models::Model m(mc, 1);
  m.forward(resmotion::testing::random_tensor({2, 3, 4, 16, 16}, gen), nn::Mode::train);  // BN stats
  const Prediction p = predict_video(m, src, 1, pipe, 3);
  EXPECT_EQ(p.clips_aggregated, 3u);
  EXPECT_EQ(p.video_id, "v1");
  const auto inputs = pipe.test_inputs(src, 1, 3);
  std::vector<double> expect(3, 0.0);
  for (const auto& x : inputs) {
    const Tensor probs = nn::softmax(m.forward(x.reshaped({1, 3, 4, 16, 16}), nn::Mode::eval));
    for (std::size_t k = 0; k < 3; ++k) expect[k] += probs[k] / 3.0;
  }
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(p.probs[k], expect[k], 1e-12);
}
