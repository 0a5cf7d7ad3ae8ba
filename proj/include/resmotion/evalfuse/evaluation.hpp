#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "resmotion/framestore/framestore.hpp"
#include "resmotion/models/model.hpp"
#include "resmotion/motioninput/pipeline.hpp"

namespace resmotion::evalfuse {

enum class PathTag { motion, appearance, fused };
std::string_view to_string(PathTag tag);
PathTag parse_path_tag(std::string_view s);

struct Prediction {
  std::string video_id;
  std::vector<double> probs;  // nonnegative, sums to 1
  PathTag tag = PathTag::motion;
  std::size_t clips_aggregated = 0;
};

// Softmax probabilities averaged over `num_clips` uniformly placed test clips
// (or frames, for the appearance path). Runs the model in eval mode.
Prediction predict_video(models::Model& model, const framestore::FrameSource& source,
                         std::size_t index, const motioninput::InputPipeline& pipeline,
                         std::size_t num_clips = 5);

std::vector<Prediction> predict_videos(models::Model& model, const framestore::FrameSource& source,
                                       std::span<const std::size_t> indices,
                                       const motioninput::InputPipeline& pipeline,
                                       std::size_t num_clips = 5);

// Unweighted average of two paths' probabilities for the same video.
Prediction fuse(const Prediction& a, const Prediction& b);
// weight * a + (1 - weight) * b. Experimental; fuse() is the default rule.
Prediction fuse_weighted(const Prediction& a, const Prediction& b, double weight_a);
// Pairs predictions by video id; both lists must cover the same videos.
std::vector<Prediction> fuse_all(std::span<const Prediction> a, std::span<const Prediction> b);

// Class indices by descending probability; equal probabilities keep the
// lower class index first.
std::vector<std::size_t> ranked_classes(std::span<const double> probs);

struct EvalReport {
  double top1 = 0.0;
  double top5 = 0.0;
  std::vector<double> per_category_acc;        // top-1 per true class; 0 when unseen
  std::vector<std::size_t> per_category_count;  // videos per true class
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::size_t num_videos = 0;
};

// Scores one prediction per labeled video; throws DataError on missing,
// duplicate or unlabeled predictions.
EvalReport evaluate(std::span<const Prediction> predictions,
                    const std::map<std::string, int>& labels, std::size_t num_classes);

// Pearson r of two per-category accuracy vectors. Throws std::domain_error
// ("undefined correlation") when either vector is constant.
double pearson_correlation(std::span<const double> a, std::span<const double> b);

struct CategoryDifference {
  std::size_t category = 0;
  std::string name;
  double acc_a = 0.0, acc_b = 0.0, diff = 0.0;
};

struct DifferenceReport {
  std::vector<CategoryDifference> ranked;  // diff descending, ties by category index
  std::vector<CategoryDifference> best(std::size_t n = 5) const;
  std::vector<CategoryDifference> worst(std::size_t n = 5) const;
};

DifferenceReport accuracy_difference_report(const EvalReport& a, const EvalReport& b,
                                            std::span<const std::string> class_names);

// ---- Files -------------------------------------------------------------------

// One JSON object per line: {"video_id", "tag", "clips", "probs"}.
void write_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

// "key=value" lines; vectors comma-separated, confusion rows separated by ';'.
void write_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_report(const std::filesystem::path& path);
std::string format_report(const EvalReport& report, std::span<const std::string> class_names);
std::string format_difference(const DifferenceReport& diff, double pearson);

std::vector<std::string> default_class_names(std::size_t num_classes);

}  // namespace resmotion::evalfuse
