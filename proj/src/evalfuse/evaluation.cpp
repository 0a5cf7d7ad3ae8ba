#include "resmotion/evalfuse/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "resmotion/core/errors.hpp"
#include "resmotion/core/ops.hpp"

namespace resmotion::evalfuse {

std::string_view to_string(PathTag tag) {
  switch (tag) {
    case PathTag::motion: return "motion";
    case PathTag::appearance: return "appearance";
    case PathTag::fused: return "fused";
  }
  return "motion";
}

PathTag parse_path_tag(std::string_view s) {
  if (s == "motion") return PathTag::motion;
  if (s == "appearance") return PathTag::appearance;
  if (s == "fused") return PathTag::fused;
  throw DataError("unknown path tag '" + std::string(s) + "'");
}

Prediction predict_video(models::Model& model, const framestore::FrameSource& source,
                         std::size_t index, const motioninput::InputPipeline& pipeline,
                         std::size_t num_clips) {
  const std::vector<Tensor> inputs = pipeline.test_inputs(source, index, num_clips);
  const Tensor probs = nn::softmax(model.forward(stack(inputs), nn::Mode::eval));
  const std::size_t k = probs.dim(1);
  Prediction p;
  p.video_id = source.records().at(index).id;
  p.tag = pipeline.is_motion() ? PathTag::motion : PathTag::appearance;
  p.clips_aggregated = inputs.size();
  p.probs.assign(k, 0.0);
  for (std::size_t c = 0; c < inputs.size(); ++c) {
    for (std::size_t j = 0; j < k; ++j) p.probs[j] += probs[c * k + j];
  }
  for (auto& v : p.probs) v /= static_cast<double>(inputs.size());
  return p;
}

std::vector<Prediction> predict_videos(models::Model& model, const framestore::FrameSource& source,
                                       std::span<const std::size_t> indices,
                                       const motioninput::InputPipeline& pipeline,
                                       std::size_t num_clips) {
  std::vector<Prediction> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(predict_video(model, source, i, pipeline, num_clips));
  return out;
}

Prediction fuse_weighted(const Prediction& a, const Prediction& b, double weight_a) {
  if (a.video_id != b.video_id) {
    throw std::invalid_argument("fuse: video id mismatch ('" + a.video_id + "' vs '" + b.video_id + "')");
  }
  if (a.probs.size() != b.probs.size()) {
    throw std::invalid_argument("fuse: class count mismatch for '" + a.video_id + "'");
  }
  Prediction f;
  f.video_id = a.video_id;
  f.tag = PathTag::fused;
  f.clips_aggregated = a.clips_aggregated + b.clips_aggregated;
  f.probs.resize(a.probs.size());
  for (std::size_t j = 0; j < a.probs.size(); ++j) {
    f.probs[j] = weight_a * a.probs[j] + (1.0 - weight_a) * b.probs[j];
  }
  return f;
}

Prediction fuse(const Prediction& a, const Prediction& b) {
  Prediction f = fuse_weighted(a, b, 0.5);
  // (a + b) / 2 exactly, so fuse(p, p) == p bit for bit.
  for (std::size_t j = 0; j < f.probs.size(); ++j) f.probs[j] = (a.probs[j] + b.probs[j]) / 2.0;
  return f;
}

std::vector<Prediction> fuse_all(std::span<const Prediction> a, std::span<const Prediction> b) {
  std::map<std::string, const Prediction*> by_id;
  for (const auto& p : b) by_id[p.video_id] = &p;
  if (by_id.size() != a.size() || b.size() != a.size()) {
    throw DataError("fuse: prediction files cover different video sets");
  }
  std::vector<Prediction> out;
  for (const auto& p : a) {
    auto it = by_id.find(p.video_id);
    if (it == by_id.end()) throw DataError("fuse: no partner prediction for '" + p.video_id + "'");
    out.push_back(fuse(p, *it->second));
  }
  return out;
}

std::vector<std::size_t> ranked_classes(std::span<const double> probs) {
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return probs[x] > probs[y]; });
  return order;
}

EvalReport evaluate(std::span<const Prediction> predictions,
                    const std::map<std::string, int>& labels, std::size_t num_classes) {
  EvalReport r;
  r.per_category_acc.assign(num_classes, 0.0);
  r.per_category_count.assign(num_classes, 0);
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));

  std::set<std::string> seen;
  std::size_t hits1 = 0, hits5 = 0;
  std::vector<std::size_t> correct(num_classes, 0);
  for (const auto& p : predictions) {
    auto it = labels.find(p.video_id);
    if (it == labels.end()) throw DataError("prediction for unlabeled video '" + p.video_id + "'");
    if (!seen.insert(p.video_id).second) throw DataError("duplicate prediction for '" + p.video_id + "'");
    if (p.probs.size() != num_classes) {
      throw DataError("prediction for '" + p.video_id + "' has " + std::to_string(p.probs.size()) +
                      " classes, expected " + std::to_string(num_classes));
    }
    const auto label = static_cast<std::size_t>(it->second);
    if (label >= num_classes) throw DataError("label out of range for '" + p.video_id + "'");
    const auto ranked = ranked_classes(p.probs);
    const std::size_t top = ranked.front();
    ++r.confusion[label][top];
    ++r.per_category_count[label];
    if (top == label) {
      ++hits1;
      ++correct[label];
    }
    const std::size_t k = std::min<std::size_t>(5, ranked.size());
    if (std::find(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k), label) !=
        ranked.begin() + static_cast<std::ptrdiff_t>(k)) {
      ++hits5;
    }
  }
  for (const auto& [id, label] : labels) {
    if (!seen.count(id)) throw DataError("missing prediction for video '" + id + "'");
  }
  r.num_videos = predictions.size();
  if (r.num_videos) {
    r.top1 = static_cast<double>(hits1) / static_cast<double>(r.num_videos);
    r.top5 = static_cast<double>(hits5) / static_cast<double>(r.num_videos);
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (r.per_category_count[c]) {
      r.per_category_acc[c] =
          static_cast<double>(correct[c]) / static_cast<double>(r.per_category_count[c]);
    }
  }
  return r;
}

double pearson_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("pearson: vectors differ in length");
  if (a.size() < 2) throw std::invalid_argument("pearson: need at least 2 categories");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw std::domain_error("undefined correlation: constant vector");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<CategoryDifference> DifferenceReport::best(std::size_t n) const {
  n = std::min(n, ranked.size());
  return {ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n)};
}

std::vector<CategoryDifference> DifferenceReport::worst(std::size_t n) const {
  n = std::min(n, ranked.size());
  return {ranked.end() - static_cast<std::ptrdiff_t>(n), ranked.end()};
}

DifferenceReport accuracy_difference_report(const EvalReport& a, const EvalReport& b,
                                            std::span<const std::string> class_names) {
  const std::size_t k = a.per_category_acc.size();
  if (b.per_category_acc.size() != k || class_names.size() != k) {
    throw std::invalid_argument("accuracy difference: category sets do not match");
  }
  DifferenceReport d;
  for (std::size_t c = 0; c < k; ++c) {
    d.ranked.push_back({c, class_names[c], a.per_category_acc[c], b.per_category_acc[c],
                        a.per_category_acc[c] - b.per_category_acc[c]});
  }
  std::stable_sort(d.ranked.begin(), d.ranked.end(),
                   [](const CategoryDifference& x, const CategoryDifference& y) { return x.diff > y.diff; });
  return d;
}

// ---- Files -------------------------------------------------------------------

void write_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& p : predictions) {
    nlohmann::json j;
    j["video_id"] = p.video_id;
    j["tag"] = to_string(p.tag);
    j["clips"] = p.clips_aggregated;
    j["probs"] = p.probs;
    out << j.dump() << '\n';
  }
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Prediction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Prediction p;
      p.video_id = j.at("video_id").get<std::string>();
      p.tag = parse_path_tag(j.at("tag").get<std::string>());
      p.clips_aggregated = j.at("clips").get<std::size_t>();
      p.probs = j.at("probs").get<std::vector<double>>();
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

namespace {

std::string join(const auto& values) {
  std::ostringstream os;
  os.precision(17);
  bool first = true;
  for (const auto& v : values) {
    os << (first ? "" : ",") << v;
    first = false;
  }
  return os.str();
}

template <typename T>
std::vector<T> split_values(const std::string& text, char sep) {
  std::vector<T> out;
  if (text.empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    std::istringstream is(item);
    T v{};
    if (!(is >> v)) throw DataError("report: bad value '" + item + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

void write_report(const std::filesystem::path& path, const EvalReport& r) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "num_videos=" << r.num_videos << '\n'
      << "num_classes=" << r.per_category_acc.size() << '\n'
      << "top1=" << r.top1 << '\n'
      << "top5=" << r.top5 << '\n'
      << "per_category_acc=" << join(r.per_category_acc) << '\n'
      << "per_category_count=" << join(r.per_category_count) << '\n'
      << "confusion=";
  for (std::size_t i = 0; i < r.confusion.size(); ++i) out << (i ? ";" : "") << join(r.confusion[i]);
  out << '\n';
}

EvalReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (line.empty() || line.front() == '#') continue;
    if (eq == std::string::npos) throw DataError(path.string() + ": expected key=value, got '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError(path.string() + ": missing key '" + key + "'");
    return it->second;
  };
  EvalReport r;
  r.num_videos = std::stoul(need("num_videos"));
  r.top1 = std::stod(need("top1"));
  r.top5 = std::stod(need("top5"));
  r.per_category_acc = split_values<double>(need("per_category_acc"), ',');
  r.per_category_count = split_values<std::size_t>(need("per_category_count"), ',');
  const std::size_t k = std::stoul(need("num_classes"));
  if (r.per_category_acc.size() != k || r.per_category_count.size() != k) {
    throw DataError(path.string() + ": per-category vectors do not match num_classes");
  }
  std::stringstream rows(need("confusion"));
  std::string row;
  while (std::getline(rows, row, ';')) r.confusion.push_back(split_values<std::size_t>(row, ','));
  return r;
}

std::string format_report(const EvalReport& r, std::span<const std::string> class_names) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "videos: %zu  top-1: %.2f%%  top-5: %.2f%%\n", r.num_videos,
                100.0 * r.top1, 100.0 * r.top5);
  os << buf;
  os << "category                         videos   top-1\n";
  for (std::size_t c = 0; c < r.per_category_acc.size(); ++c) {
    const std::string name = c < class_names.size() ? class_names[c] : "class_" + std::to_string(c);
    std::snprintf(buf, sizeof buf, "%-32s %6zu  %6.2f%%\n", name.c_str(), r.per_category_count[c],
                  100.0 * r.per_category_acc[c]);
    os << buf;
  }
  return os.str();
}

std::string format_difference(const DifferenceReport& diff, double pearson) {
  std::ostringstream os;
  char buf[200];
  std::snprintf(buf, sizeof buf, "pearson_r: %.6f\n", pearson);
  os << buf;
  auto table = [&](const char* title, const std::vector<CategoryDifference>& rows) {
    os << title << '\n';
    for (const auto& d : rows) {
      std::snprintf(buf, sizeof buf, "  %-32s %+8.2f  (%6.2f%% vs %6.2f%%)\n", d.name.c_str(),
                    100.0 * d.diff, 100.0 * d.acc_a, 100.0 * d.acc_b);
      os << buf;
    }
  };
  table("best-5:", diff.best());
  table("worst-5:", diff.worst());
  table("all categories:", diff.ranked);
  return os.str();
}

std::vector<std::string> default_class_names(std::size_t num_classes) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < num_classes; ++c) names.push_back("class_" + std::to_string(c));
  return names;
}

}  // namespace resmotion::evalfuse
