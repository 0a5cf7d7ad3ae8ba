#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "resmotion/framestore/framestore.hpp"
#include "resmotion/models/model.hpp"
#include "resmotion/motioninput/pipeline.hpp"

namespace resmotion::trainer {

using motioninput::Rng;

enum class ScheduleKind { step, plateau };
std::string_view to_string(ScheduleKind kind);
ScheduleKind parse_schedule(std::string_view s);

struct LrSchedule {
  ScheduleKind kind = ScheduleKind::step;
  // Epoch indices at which the rate is multiplied by `factor`. Empty means
  // 50% and 75% of the configured epochs.
  std::vector<std::size_t> milestones;
  double factor = 0.1;
  // Plateau mode: decay once validation loss has not improved for this many
  // consecutive epochs.
  std::size_t patience = 3;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  double initial_lr = 0.1;
  std::size_t epochs = 100;
  LrSchedule schedule;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  // Samples inputs serially. Parallel sampling gives the same result, this
  // just removes the thread pool from the picture.
  bool deterministic = true;
  // Validation every this many epochs (0: only after the last epoch).
  std::size_t val_every = 1;
  std::size_t val_clips = 5;

  void validate() const;
  std::vector<std::size_t> effective_milestones() const;
  std::string canonical() const;
};

// Learning rate for `epoch`. `val_loss_history[i]` is the validation loss
// recorded after epoch i; plateau mode only reads entries before `epoch`.
double apply_lr_schedule(const TrainConfig& config, std::size_t epoch,
                         std::span<const double> val_loss_history);

struct TrainState {
  std::size_t epoch = 0;  // completed epochs
  std::uint64_t step = 0;  // completed updates
  std::map<std::string, Tensor> momentum;
  Rng rng;
  double best_metric = -std::numeric_limits<double>::infinity();  // best val top-1
  std::vector<double> val_loss_history;

  static TrainState initial(const TrainConfig& config);
};

struct StepResult {
  double loss = 0.0;
  std::size_t correct1 = 0;
  std::size_t correct5 = 0;
};

// One SGD update on a prepared batch: forward (train mode), cross-entropy,
// backward, then per parameter g = grad + wd * p (decayed parameters only),
// v = momentum * v + g, p -= lr * v. Throws NumericError on a non-finite loss.
StepResult train_step(models::Model& model, const Tensor& inputs, std::span<const int> labels,
                      const TrainConfig& config, TrainState& state, double lr);

struct EpochMetrics {
  std::size_t epoch = 0;
  std::string split;  // "train" or "val"
  double loss = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
  double lr = 0.0;
};

// One pass over `indices` in shuffled mini-batches. Advances state.epoch.
EpochMetrics train_epoch(models::Model& model, const framestore::FrameSource& source,
                         std::span<const std::size_t> indices,
                         const motioninput::InputPipeline& pipeline, const TrainConfig& config,
                         TrainState& state);

// Eval-mode pass with clip-averaged probabilities; loss is the mean negative
// log of the averaged probability of the true class.
EpochMetrics validate_epoch(models::Model& model, const framestore::FrameSource& source,
                            std::span<const std::size_t> indices,
                            const motioninput::InputPipeline& pipeline, std::size_t num_clips);

struct FitOptions {
  std::ostream* log = nullptr;  // JSON lines, one per split per epoch
  std::optional<std::size_t> stop_after_epoch;  // stop early (for resume tests)
  std::function<void(const EpochMetrics&)> on_epoch;
};

// Runs epochs state.epoch .. config.epochs - 1. Returns every log record.
std::vector<EpochMetrics> fit(models::Model& model, const framestore::FrameSource& source,
                              std::span<const std::size_t> train_indices,
                              std::span<const std::size_t> val_indices,
                              const motioninput::InputPipeline& pipeline, const TrainConfig& config,
                              TrainState& state, const FitOptions& options = {});

std::string log_line(const EpochMetrics& m);
EpochMetrics parse_log_line(const std::string& line);

// ---- Checkpoint --------------------------------------------------------------
//
// A parameter file (see models::write_param_file, always f64) followed by:
//
//   "RMO1"
//   u64 epoch, u64 step
//   f64 best metric
//   u32 length, bytes: rng state text
//   u32 count, f64 validation loss history
//   u32 count, per buffer: u32 name length, name, u32 rank, u32 dims, f64 data

void write_checkpoint(std::ostream& os, models::Model& model, const TrainState& state);
TrainState read_checkpoint(std::istream& is, models::Model& model);
void save_checkpoint(const std::filesystem::path& path, models::Model& model, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path, models::Model& model);

}  // namespace resmotion::trainer
