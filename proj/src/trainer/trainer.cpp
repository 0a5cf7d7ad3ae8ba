#include "resmotion/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "resmotion/core/errors.hpp"
#include "resmotion/core/ops.hpp"
#include "resmotion/evalfuse/evaluation.hpp"
#include "resmotion/util/binary_io.hpp"
#include "resmotion/util/hash.hpp"

namespace resmotion::trainer {

std::string_view to_string(ScheduleKind kind) { return kind == ScheduleKind::step ? "step" : "plateau"; }

ScheduleKind parse_schedule(std::string_view s) {
  if (s == "step") return ScheduleKind::step;
  if (s == "plateau") return ScheduleKind::plateau;
  throw ConfigError("unknown lr schedule '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(initial_lr > 0.0) || !std::isfinite(initial_lr)) throw ConfigError("train: initial_lr must be > 0");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
  if (!(schedule.factor > 0.0 && schedule.factor <= 1.0)) {
    throw ConfigError("train: lr factor must be in (0, 1]");
  }
  for (std::size_t i = 1; i < schedule.milestones.size(); ++i) {
    if (schedule.milestones[i] <= schedule.milestones[i - 1]) {
      throw ConfigError("train: milestones must be strictly increasing");
    }
  }
  if (schedule.kind == ScheduleKind::plateau && schedule.patience < 1) {
    throw ConfigError("train: plateau patience must be >= 1");
  }
  if (val_clips < 1) throw ConfigError("train: val_clips must be >= 1");
}

std::vector<std::size_t> TrainConfig::effective_milestones() const {
  if (!schedule.milestones.empty()) return schedule.milestones;
  std::vector<std::size_t> m{epochs / 2, epochs * 3 / 4};
  m.erase(std::unique(m.begin(), m.end()), m.end());
  m.erase(std::remove(m.begin(), m.end(), std::size_t{0}), m.end());
  return m;
}

std::string TrainConfig::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "batch_size=" << batch_size << '\n'
     << "initial_lr=" << initial_lr << '\n'
     << "epochs=" << epochs << '\n'
     << "lr_schedule=" << to_string(schedule.kind) << '\n'
     << "milestones=";
  const auto m = effective_milestones();
  for (std::size_t i = 0; i < m.size(); ++i) os << (i ? "," : "") << m[i];
  os << '\n'
     << "lr_factor=" << schedule.factor << '\n'
     << "patience=" << schedule.patience << '\n'
     << "momentum=" << momentum << '\n'
     << "weight_decay=" << weight_decay << '\n'
     << "seed=" << seed << '\n'
     << "val_every=" << val_every << '\n'
     << "val_clips=" << val_clips << '\n';
  return os.str();
}

double apply_lr_schedule(const TrainConfig& config, std::size_t epoch,
                         std::span<const double> val_loss_history) {
  const double factor = config.schedule.factor;
  if (config.schedule.kind == ScheduleKind::step) {
    const auto m = config.effective_milestones();
    const auto passed = std::count_if(m.begin(), m.end(), [&](std::size_t x) { return x <= epoch; });
    return config.initial_lr * std::pow(factor, static_cast<double>(passed));
  }
  double lr = config.initial_lr;
  const std::size_t n = std::min(epoch, val_loss_history.size());
  if (n == 0) return lr;
  double best = val_loss_history[0];
  std::size_t stale = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (val_loss_history[i] < best) {
      best = val_loss_history[i];
      stale = 0;
    } else if (++stale >= config.schedule.patience) {
      lr *= factor;
      stale = 0;
    }
  }
  return lr;
}

TrainState TrainState::initial(const TrainConfig& config) {
  TrainState s;
  s.rng.seed(config.seed);
  return s;
}

namespace {

std::string failure_snapshot(models::Model& model, const TrainState& state, double lr, double loss,
                             std::span<const int> labels) {
  nlohmann::json j;
  j["epoch"] = state.epoch;
  j["step"] = state.step;
  j["lr"] = lr;
  j["loss"] = std::isfinite(loss) ? nlohmann::json(loss) : nlohmann::json(std::to_string(loss));
  j["labels"] = std::vector<int>(labels.begin(), labels.end());
  nlohmann::json params = nlohmann::json::object();
  for (auto* p : model.parameters()) {
    double sq = 0.0;
    bool finite = true;
    for (double v : p->value.values()) {
      finite = finite && std::isfinite(v);
      sq += v * v;
    }
    params[p->name] = {{"l2", std::isfinite(sq) ? nlohmann::json(std::sqrt(sq)) : nlohmann::json("inf")},
                       {"finite", finite}};
  }
  j["parameters"] = params;
  return j.dump();
}

void count_hits(const Tensor& logits, std::span<const int> labels, StepResult& r) {
  const std::size_t k = logits.dim(1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::span<const double> row(logits.data() + i * k, k);
    const auto ranked = evalfuse::ranked_classes(row);
    const auto label = static_cast<std::size_t>(labels[i]);
    if (ranked[0] == label) ++r.correct1;
    const std::size_t top = std::min<std::size_t>(5, k);
    if (std::find(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(top), label) !=
        ranked.begin() + static_cast<std::ptrdiff_t>(top)) {
      ++r.correct5;
    }
  }
}

}  // namespace

StepResult train_step(models::Model& model, const Tensor& inputs, std::span<const int> labels,
                      const TrainConfig& config, TrainState& state, double lr) {
  model.zero_grad();
  const Tensor logits = model.forward(inputs, nn::Mode::train);
  const nn::LossResult loss = nn::cross_entropy_loss(logits, labels);
  if (!std::isfinite(loss.loss)) {
    throw NumericError("non-finite training loss at epoch " + std::to_string(state.epoch) + ", step " +
                           std::to_string(state.step),
                       failure_snapshot(model, state, lr, loss.loss, labels));
  }
  model.backward(loss.grad);

  for (auto* p : model.parameters()) {
    auto [it, fresh] = state.momentum.try_emplace(p->name, p->value.shape());
    Tensor& v = it->second;
    const double wd = p->decay ? config.weight_decay : 0.0;
    double* pv = p->value.data();
    const double* pg = p->grad.data();
    double* vv = v.data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double g = pg[i] + wd * pv[i];
      vv[i] = config.momentum * vv[i] + g;
      pv[i] -= lr * vv[i];
    }
  }
  ++state.step;

  StepResult r;
  r.loss = loss.loss;
  count_hits(logits, labels, r);
  return r;
}

EpochMetrics train_epoch(models::Model& model, const framestore::FrameSource& source,
                         std::span<const std::size_t> indices,
                         const motioninput::InputPipeline& pipeline, const TrainConfig& config,
                         TrainState& state) {
  if (indices.empty()) throw DataError("train_epoch: empty training set");
  if (static_cast<std::size_t>(source.num_classes()) != model.config().num_classes) {
    throw ConfigError("train_epoch: dataset has " + std::to_string(source.num_classes()) +
                      " classes, model has " + std::to_string(model.config().num_classes));
  }
  const double lr = apply_lr_schedule(config, state.epoch, state.val_loss_history);
  std::vector<std::size_t> order(indices.begin(), indices.end());
  std::shuffle(order.begin(), order.end(), state.rng);

  double loss_sum = 0.0;
  std::size_t hits1 = 0, hits5 = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
    const std::size_t n = std::min(config.batch_size, order.size() - begin);
    // One seed per sample, drawn in batch order, so sampling may run on any
    // number of threads without changing the batch.
    std::vector<std::uint64_t> seeds(n);
    for (auto& s : seeds) s = state.rng();
    std::vector<Tensor> samples(n);
    std::vector<int> labels(n);
    const bool parallel = !config.deterministic;
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng(seeds[i]);
      samples[i] = pipeline.training_input(source, order[begin + i], rng);
    }
    for (std::size_t i = 0; i < n; ++i) labels[i] = source.records()[order[begin + i]].label;

    const StepResult r = train_step(model, stack(samples), labels, config, state, lr);
    loss_sum += r.loss * static_cast<double>(n);
    hits1 += r.correct1;
    hits5 += r.correct5;
  }
  ++state.epoch;

  EpochMetrics m;
  m.epoch = state.epoch - 1;
  m.split = "train";
  const double total = static_cast<double>(order.size());
  m.loss = loss_sum / total;
  m.top1 = static_cast<double>(hits1) / total;
  m.top5 = static_cast<double>(hits5) / total;
  m.lr = lr;
  return m;
}

EpochMetrics validate_epoch(models::Model& model, const framestore::FrameSource& source,
                            std::span<const std::size_t> indices,
                            const motioninput::InputPipeline& pipeline, std::size_t num_clips) {
  EpochMetrics m;
  m.split = "val";
  if (indices.empty()) return m;
  std::size_t hits1 = 0, hits5 = 0;
  double loss_sum = 0.0;
  for (auto idx : indices) {
    const auto p = evalfuse::predict_video(model, source, idx, pipeline, num_clips);
    const auto label = static_cast<std::size_t>(source.records()[idx].label);
    loss_sum -= std::log(std::max(p.probs[label], 1e-300));
    const auto ranked = evalfuse::ranked_classes(p.probs);
    if (ranked[0] == label) ++hits1;
    const std::size_t top = std::min<std::size_t>(5, ranked.size());
    if (std::find(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(top), label) !=
        ranked.begin() + static_cast<std::ptrdiff_t>(top)) {
      ++hits5;
    }
  }
  const double total = static_cast<double>(indices.size());
  m.loss = loss_sum / total;
  m.top1 = static_cast<double>(hits1) / total;
  m.top5 = static_cast<double>(hits5) / total;
  return m;
}

std::vector<EpochMetrics> fit(models::Model& model, const framestore::FrameSource& source,
                              std::span<const std::size_t> train_indices,
                              std::span<const std::size_t> val_indices,
                              const motioninput::InputPipeline& pipeline, const TrainConfig& config,
                              TrainState& state, const FitOptions& options) {
  config.validate();
  std::vector<EpochMetrics> records;
  auto emit = [&](const EpochMetrics& m) {
    records.push_back(m);
    if (options.log) *options.log << log_line(m) << '\n' << std::flush;
    if (options.on_epoch) options.on_epoch(m);
  };
  while (state.epoch < config.epochs) {
    if (options.stop_after_epoch && state.epoch >= *options.stop_after_epoch) break;
    const EpochMetrics train = train_epoch(model, source, train_indices, pipeline, config, state);
    emit(train);
    const bool last = state.epoch == config.epochs;
    const bool due = config.val_every > 0 && state.epoch % config.val_every == 0;
    if (!val_indices.empty() && (due || last)) {
      EpochMetrics val = validate_epoch(model, source, val_indices, pipeline, config.val_clips);
      val.epoch = train.epoch;
      val.lr = train.lr;
      state.val_loss_history.push_back(val.loss);
      state.best_metric = std::max(state.best_metric, val.top1);
      emit(val);
    }
  }
  return records;
}

std::string log_line(const EpochMetrics& m) {
  nlohmann::json j;
  j["epoch"] = m.epoch;
  j["split"] = m.split;
  j["loss"] = m.loss;
  j["top1"] = m.top1;
  j["top5"] = m.top5;
  j["lr"] = m.lr;
  return j.dump();
}

EpochMetrics parse_log_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    EpochMetrics m;
    m.epoch = j.at("epoch").get<std::size_t>();
    m.split = j.at("split").get<std::string>();
    m.loss = j.at("loss").get<double>();
    m.top1 = j.at("top1").get<double>();
    m.top5 = j.at("top5").get<double>();
    m.lr = j.at("lr").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad training log line: ") + e.what());
  }
}

// ---- Checkpoint --------------------------------------------------------------

void write_checkpoint(std::ostream& os, models::Model& model, const TrainState& state) {
  models::write_param_file(os, models::snapshot(model, models::ParamDType::f64));
  io::write_magic(os, "RMO1");
  io::write_le<std::uint64_t>(os, state.epoch);
  io::write_le<std::uint64_t>(os, state.step);
  io::write_le<double>(os, state.best_metric);
  std::ostringstream rng_text;
  rng_text << state.rng;
  io::write_string(os, rng_text.str());
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(state.val_loss_history.size()));
  for (double v : state.val_loss_history) io::write_le<double>(os, v);
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(state.momentum.size()));
  for (const auto& [name, t] : state.momentum) {
    io::write_string(os, name);
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (double v : t.values()) io::write_le<double>(os, v);
  }
}

TrainState read_checkpoint(std::istream& is, models::Model& model) {
  const models::ParamFile params = models::read_param_file(is);
  if (params.dtype != models::ParamDType::f64) throw FormatError("checkpoint: parameters must be f64");
  if (params.config_hash != model.config().hash()) {
    throw FormatError("checkpoint was written for a different model config (hash " +
                      util::hex64(params.config_hash) + ", model " + util::hex64(model.config().hash()) + ")");
  }
  io::expect_magic(is, "RMO1");
  TrainState s;
  s.epoch = io::read_le<std::uint64_t>(is, "epoch");
  s.step = io::read_le<std::uint64_t>(is, "step");
  s.best_metric = io::read_le<double>(is, "best metric");
  std::istringstream rng_text(io::read_string(is, "rng state", 1 << 16));
  rng_text >> s.rng;
  if (!rng_text) throw FormatError("checkpoint: bad rng state");
  const auto hist = io::read_le<std::uint32_t>(is, "history count");
  if (hist > (1u << 24)) throw FormatError("checkpoint: implausible history length");
  for (std::uint32_t i = 0; i < hist; ++i) s.val_loss_history.push_back(io::read_le<double>(is, "history"));

  std::map<std::string, Shape> expected;
  for (auto* p : model.parameters()) expected[p->name] = p->value.shape();
  const auto count = io::read_le<std::uint32_t>(is, "momentum count");
  if (count > expected.size()) throw FormatError("checkpoint: more momentum buffers than parameters");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = io::read_string(is, "momentum name", 4096);
    const auto rank = io::read_le<std::uint32_t>(is, "rank");
    if (rank == 0 || rank > 8) throw FormatError("checkpoint: bad rank for momentum " + name);
    Shape shape(rank);
    for (auto& d : shape) d = io::read_le<std::uint32_t>(is, "extent");
    auto it = expected.find(name);
    if (it == expected.end() || it->second != shape) {
      throw FormatError("checkpoint: momentum buffer '" + name + "' does not match the model");
    }
    Tensor t(shape);
    for (auto& v : t.values()) v = io::read_le<double>(is, "momentum payload");
    s.momentum.emplace(std::move(name), std::move(t));
  }
  // Only touch the model once the whole file has parsed.
  models::restore(model, params);
  return s;
}

void save_checkpoint(const std::filesystem::path& path, models::Model& model, const TrainState& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_checkpoint(out, model, state);
  if (!out) throw DataError("write failed for " + path.string());
}

TrainState load_checkpoint(const std::filesystem::path& path, models::Model& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_checkpoint(in, model);
}

}  // namespace resmotion::trainer
