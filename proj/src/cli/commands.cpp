#include "resmotion/cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <omp.h>

#include "resmotion/core/errors.hpp"
#include "resmotion/evalfuse/evaluation.hpp"
#include "resmotion/util/hash.hpp"

namespace resmotion::cli {

namespace {

using Clock = std::chrono::steady_clock;

// Git-style content hash: blob hash for files; for directories, the blob
// hash of the sorted "relative_path blob_hash" listing.
std::string hash_path(const fs::path& p) {
  if (fs::is_regular_file(p)) return util::git_blob_hash_file(p);
  if (!fs::is_directory(p)) throw DataError("cannot hash missing output " + p.string());
  std::vector<std::string> lines;
  for (const auto& e : fs::recursive_directory_iterator(p)) {
    if (e.is_regular_file()) {
      lines.push_back(fs::relative(e.path(), p).generic_string() + " " + util::git_blob_hash_file(e.path()));
    }
  }
  std::sort(lines.begin(), lines.end());
  std::string listing;
  for (const auto& l : lines) listing += l + "\n";
  return util::git_blob_hash(listing);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

struct Data {
  framestore::DiskDataset source;
  std::vector<std::size_t> train, val;

  explicit Data(const fs::path& root) : source(root, root / "manifest.txt") {
    if (source.size() == 0) throw DataError("empty dataset " + root.string());
    auto read = [&](const char* name) {
      return fs::exists(root / name) ? synthgen::split_indices(source, root / name) : std::vector<std::size_t>{};
    };
    train = read("train.txt");
    val = read("val.txt");
    if (train.empty()) {
      for (std::size_t i = 0; i < source.size(); ++i) train.push_back(i);
    }
  }

  std::vector<std::size_t> split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") {
      if (val.empty()) throw DataError("dataset has no val.txt split");
      return val;
    }
    if (name != "all") throw ConfigError("unknown split '" + name + "' (all, train, val)");
    std::vector<std::size_t> all(source.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }

  std::map<std::string, int> labels(const std::vector<std::size_t>& indices) const {
    std::map<std::string, int> out;
    for (auto i : indices) out[source.records()[i].id] = source.records()[i].label;
    return out;
  }

  std::size_t num_classes() const { return static_cast<std::size_t>(source.num_classes()); }
};

// Trains one model and evaluates it on the val split; shared by train and ablate.
struct TrainOutcome {
  std::vector<trainer::EpochMetrics> log;
  evalfuse::EvalReport report;
};

TrainOutcome train_and_report(const RunConfig& cfg, const Data& data, const fs::path& out,
                              const std::optional<fs::path>& resume, RunManifest& manifest) {
  models::Model model = models::build_model(cfg.resolved_model(data.num_classes()), cfg.train.seed);
  trainer::TrainState state = trainer::TrainState::initial(cfg.train);
  if (resume) {
    state = trainer::load_checkpoint(*resume, model);
    manifest.inputs.push_back(*resume);
  }
  const auto pipeline = cfg.pipeline();
  const fs::path log_path = out / "train_log.jsonl";
  std::ofstream log(log_path);
  if (!log) throw DataError("cannot write " + log_path.string());
  trainer::FitOptions options;
  options.log = &log;

  TrainOutcome outcome;
  try {
    outcome.log = trainer::fit(model, data.source, data.train, data.val, pipeline, cfg.train, state, options);
  } catch (const NumericError& e) {
    write_text(out / "numeric_failure.json", e.snapshot() + "\n");
    throw;
  }
  log.close();

  models::save_params(model, out / "model.rmp", models::ParamDType::f64, to_ini(cfg));
  trainer::save_checkpoint(out / "checkpoint.rmk", model, state);
  write_text(out / "config.ini", to_ini(cfg));
  manifest.outputs.insert(manifest.outputs.end(),
                          {log_path, out / "model.rmp", out / "checkpoint.rmk", out / "config.ini"});

  if (!data.val.empty()) {
    const auto preds = evalfuse::predict_videos(model, data.source, data.val, pipeline, cfg.input.num_clips);
    outcome.report = evalfuse::evaluate(preds, data.labels(data.val), data.num_classes());
    evalfuse::write_predictions(out / "val_predictions.jsonl", preds);
    evalfuse::write_report(out / "val_report.txt", outcome.report);
    manifest.outputs.insert(manifest.outputs.end(), {out / "val_predictions.jsonl", out / "val_report.txt"});
  }
  return outcome;
}

int finish(RunManifest& manifest, const CommonOptions& opt, Clock::time_point start) {
  manifest.wall_clock_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  manifest.write(opt.out);
  return kOk;
}

}  // namespace

void RunManifest::write(const fs::path& out_dir) const {
  nlohmann::json j;
  j["command"] = command;
  j["tool_version"] = kToolVersion;
  j["seed"] = seed;
  j["config"] = config_ini;
  j["inputs"] = nlohmann::json::array();
  for (const auto& p : inputs) j["inputs"].push_back(p.string());
  j["outputs"] = nlohmann::json::array();
  for (const auto& p : outputs) {
    j["outputs"].push_back({{"path", fs::relative(p, out_dir).generic_string()}, {"hash", hash_path(p)}});
  }
  j["wall_clock_seconds"] = wall_clock_seconds;
  write_text(out_dir / "run_manifest.json", j.dump(2) + "\n");
}

RunConfig CommonOptions::resolve() const {
  RunConfig cfg = config ? load_config(*config) : RunConfig{};
  if (seed) {
    cfg.synth.seed = *seed;
    cfg.train.seed = *seed;
  }
  cfg.train.deterministic = cfg.train.deterministic || deterministic;
  return cfg;
}

int cmd_synth(const CommonOptions& opt) {
  const auto start = Clock::now();
  const RunConfig cfg = opt.resolve();
  ensure_dir(opt.out);
  const auto dataset = synthgen::generate(cfg.synth);
  synthgen::export_dataset(dataset, opt.out);

  RunManifest m{"synth", to_ini(cfg), cfg.synth.seed, {}, {}, 0.0};
  if (opt.config) m.inputs.push_back(*opt.config);
  for (const char* name : {"manifest.txt", "train.txt", "val.txt", "classes.txt", "videos"}) {
    m.outputs.push_back(opt.out / name);
  }
  std::cout << "wrote " << dataset.videos().size() << " videos (" << dataset.train_indices().size()
            << " train, " << dataset.val_indices().size() << " val) to " << opt.out.string() << '\n';
  return finish(m, opt, start);
}

int cmd_pack(const CommonOptions& opt, const fs::path& dataset) {
  const auto start = Clock::now();
  const RunConfig cfg = opt.resolve();
  const Data data(dataset);
  ensure_dir(opt.out);
  const auto indices = data.split(cfg.pack.split);

  std::vector<Tensor> clips;
  std::vector<std::uint32_t> labels;
  std::ostringstream index;
  for (auto i : indices) {
    const auto sampled = motioninput::sample_test_clips(data.source, i, cfg.input.clip, cfg.pack.clips_per_video);
    for (const auto& s : sampled) {
      index << s.video_id << '\t' << s.start_frame << '\n';
      clips.push_back(s.data);
      labels.push_back(static_cast<std::uint32_t>(data.source.records()[i].label));
    }
  }
  const auto packed = framestore::pack_clips(clips, labels, cfg.pack.dtype);
  framestore::write_packed(packed, opt.out / "clips.rmc");
  write_text(opt.out / "clips_index.txt", index.str());

  RunManifest m{"pack", to_ini(cfg), cfg.train.seed, {dataset}, {opt.out / "clips.rmc", opt.out / "clips_index.txt"}, 0.0};
  std::cout << "packed " << clips.size() << " clips to " << (opt.out / "clips.rmc").string() << '\n';
  return finish(m, opt, start);
}

int cmd_train(const CommonOptions& opt, const fs::path& dataset, const std::optional<fs::path>& resume) {
  const auto start = Clock::now();
  const RunConfig cfg = opt.resolve();
  const Data data(dataset);
  ensure_dir(opt.out);
  RunManifest m{"train", to_ini(cfg), cfg.train.seed, {dataset}, {}, 0.0};
  const TrainOutcome r = train_and_report(cfg, data, opt.out, resume, m);
  if (!data.val.empty()) {
    std::printf("val top-1 %.2f%%  top-5 %.2f%%\n", 100.0 * r.report.top1, 100.0 * r.report.top5);
  }
  return finish(m, opt, start);
}

int cmd_eval(const CommonOptions& opt, const fs::path& params, const fs::path& dataset,
             std::optional<std::size_t> num_clips, const std::string& split) {
  const auto start = Clock::now();
  std::ifstream in(params, std::ios::binary);
  if (!in) throw DataError("cannot open " + params.string());
  const models::ParamFile file = models::read_param_file(in);
  RunConfig cfg = parse_config(file.metadata);
  if (num_clips) cfg.input.num_clips = *num_clips;
  if (cfg.input.num_clips < 1) throw ConfigError("--num-clips must be >= 1");

  const Data data(dataset);
  ensure_dir(opt.out);
  models::Model model = models::build_model(cfg.resolved_model(data.num_classes()));
  models::restore(model, file);
  const auto indices = data.split(split);
  const auto preds = evalfuse::predict_videos(model, data.source, indices, cfg.pipeline(), cfg.input.num_clips);
  const auto report = evalfuse::evaluate(preds, data.labels(indices), data.num_classes());
  const auto names = synthgen::read_class_names(dataset, data.num_classes());

  evalfuse::write_predictions(opt.out / "predictions.jsonl", preds);
  evalfuse::write_report(opt.out / "report.txt", report);
  write_text(opt.out / "report_table.txt", evalfuse::format_report(report, names));
  std::cout << evalfuse::format_report(report, names);

  RunManifest m{"eval", to_ini(cfg), cfg.train.seed, {params, dataset},
                {opt.out / "predictions.jsonl", opt.out / "report.txt", opt.out / "report_table.txt"}, 0.0};
  return finish(m, opt, start);
}

int cmd_fuse(const CommonOptions& opt, const fs::path& pred_a, const fs::path& pred_b,
             const fs::path& dataset, const std::string& split) {
  const auto start = Clock::now();
  const RunConfig cfg = opt.resolve();
  const auto a = evalfuse::read_predictions(pred_a);
  const auto b = evalfuse::read_predictions(pred_b);
  const Data data(dataset);
  ensure_dir(opt.out);
  const auto fused = evalfuse::fuse_all(a, b);
  const auto indices = data.split(split);
  const auto report = evalfuse::evaluate(fused, data.labels(indices), data.num_classes());
  const auto names = synthgen::read_class_names(dataset, data.num_classes());

  evalfuse::write_predictions(opt.out / "predictions.jsonl", fused);
  evalfuse::write_report(opt.out / "report.txt", report);
  write_text(opt.out / "report_table.txt", evalfuse::format_report(report, names));
  std::cout << evalfuse::format_report(report, names);

  RunManifest m{"fuse", to_ini(cfg), cfg.train.seed, {pred_a, pred_b, dataset},
                {opt.out / "predictions.jsonl", opt.out / "report.txt", opt.out / "report_table.txt"}, 0.0};
  return finish(m, opt, start);
}

int cmd_correlate(const CommonOptions& opt, const fs::path& report_a, const fs::path& report_b,
                  const std::optional<fs::path>& classes) {
  const auto start = Clock::now();
  const RunConfig cfg = opt.resolve();
  const auto a = evalfuse::read_report(report_a);
  const auto b = evalfuse::read_report(report_b);
  const std::size_t k = a.per_category_acc.size();
  std::vector<std::string> names = evalfuse::default_class_names(k);
  if (classes) {
    std::ifstream in(*classes);
    if (!in) throw DataError("cannot open " + classes->string());
    std::vector<std::string> read;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) read.push_back(line);
    }
    if (read.size() != k) throw DataError(classes->string() + " does not list " + std::to_string(k) + " classes");
    names = read;
  }
  const double r = evalfuse::pearson_correlation(a.per_category_acc, b.per_category_acc);
  const auto diff = evalfuse::accuracy_difference_report(a, b, names);
  ensure_dir(opt.out);
  std::ostringstream kv;
  kv.precision(17);
  kv << "pearson_r=" << r << '\n';
  write_text(opt.out / "correlation.txt", kv.str());
  write_text(opt.out / "difference_table.txt", evalfuse::format_difference(diff, r));
  std::cout << evalfuse::format_difference(diff, r);

  RunManifest m{"correlate", to_ini(cfg), cfg.train.seed, {report_a, report_b},
                {opt.out / "correlation.txt", opt.out / "difference_table.txt"}, 0.0};
  if (classes) m.inputs.push_back(*classes);
  return finish(m, opt, start);
}

int cmd_ablate(const CommonOptions& opt, const fs::path& dataset) {
  const auto start = Clock::now();
  const RunConfig base = opt.resolve();
  const Data data(dataset);
  if (data.val.empty()) throw DataError("ablate needs a dataset with val.txt");
  ensure_dir(opt.out);
  RunManifest m{"ablate", to_ini(base), base.train.seed, {dataset}, {}, 0.0};

  std::ostringstream table, records;
  char line[200];
  std::snprintf(line, sizeof line, "%-10s %-10s %-6s %-9s %8s %8s\n", "input", "downsample", "act",
                "fea_diff", "top-1", "top-5");
  table << line;
  for (auto mode : base.ablate.modes) {
    for (auto down : base.ablate.downsample) {
      for (auto act : base.ablate.activation) {
        for (bool fd : base.ablate.fea_diff) {
          RunConfig cfg = base;
          cfg.model.path = models::PathKind::motion3d;
          cfg.input.clip.mode = mode;
          cfg.model.downsample = down;
          cfg.model.activation = act;
          cfg.model.fea_diff = fd;
          const std::string name = std::string(motioninput::to_string(mode)) + "-" +
                                   std::string(models::to_string(down)) + "-" +
                                   std::string(nn::to_string(act)) + (fd ? "-feadiff" : "");
          const fs::path dir = opt.out / name;
          ensure_dir(dir);
          const TrainOutcome r = train_and_report(cfg, data, dir, std::nullopt, m);
          std::snprintf(line, sizeof line, "%-10s %-10s %-6s %-9s %7.2f%% %7.2f%%\n",
                        std::string(motioninput::to_string(mode)).c_str(),
                        std::string(models::to_string(down)).c_str(), std::string(nn::to_string(act)).c_str(),
                        fd ? "yes" : "no", 100.0 * r.report.top1, 100.0 * r.report.top5);
          table << line;
          nlohmann::json j{{"run", name},
                           {"input", motioninput::to_string(mode)},
                           {"downsample", models::to_string(down)},
                           {"activation", nn::to_string(act)},
                           {"fea_diff", fd},
                           {"top1", r.report.top1},
                           {"top5", r.report.top5}};
          records << j.dump() << '\n';
        }
      }
    }
  }
  write_text(opt.out / "ablation.txt", table.str());
  write_text(opt.out / "ablation.jsonl", records.str());
  m.outputs.insert(m.outputs.end(), {opt.out / "ablation.txt", opt.out / "ablation.jsonl"});
  std::cout << table.str();
  return finish(m, opt, start);
}

int run(int argc, char** argv) {
  CLI::App app{"resmotion: residual-frame video classification toolkit"};
  app.require_subcommand(1);
  CommonOptions opt;
  std::string config, out;
  std::uint64_t seed = 0;
  int threads = 0;

  auto common = [&](CLI::App* sub, bool needs_out = true) {
    sub->add_option("--config", config, "INI config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override [synth] and [train] seeds");
    auto* o = sub->add_option("--out", out, "output directory");
    if (needs_out) o->required();
    sub->add_flag("--deterministic", opt.deterministic, "serial data sampling");
    sub->add_option("--threads", threads, "OpenMP thread count")->check(CLI::PositiveNumber);
  };

  std::string dataset, params, pred_a, pred_b, report_a, report_b, classes, resume, split = "val";
  std::size_t num_clips = 0;

  auto* synth = app.add_subcommand("synth", "generate and export a synthetic dataset");
  common(synth);
  auto* pack = app.add_subcommand("pack", "precompute test clips into a packed clip file");
  common(pack);
  pack->add_option("--dataset", dataset, "dataset root with manifest.txt")->required();
  auto* train = app.add_subcommand("train", "train one path");
  common(train);
  train->add_option("--dataset", dataset, "dataset root with manifest.txt")->required();
  train->add_option("--resume", resume, "checkpoint to resume from")->check(CLI::ExistingFile);
  auto* eval = app.add_subcommand("eval", "per-video predictions and report");
  common(eval);
  eval->add_option("--params", params, "trained model.rmp")->required()->check(CLI::ExistingFile);
  eval->add_option("--dataset", dataset, "dataset root with manifest.txt")->required();
  eval->add_option("--num-clips", num_clips, "test clips per video");
  eval->add_option("--split", split, "all, train or val");
  auto* fuse = app.add_subcommand("fuse", "average two paths' predictions");
  common(fuse);
  fuse->add_option("--a", pred_a, "predictions.jsonl")->required()->check(CLI::ExistingFile);
  fuse->add_option("--b", pred_b, "predictions.jsonl")->required()->check(CLI::ExistingFile);
  fuse->add_option("--dataset", dataset, "dataset root for labels")->required();
  fuse->add_option("--split", split, "all, train or val");
  auto* correlate = app.add_subcommand("correlate", "Pearson r and per-category differences of two reports");
  common(correlate);
  correlate->add_option("--a", report_a, "report.txt")->required()->check(CLI::ExistingFile);
  correlate->add_option("--b", report_b, "report.txt")->required()->check(CLI::ExistingFile);
  correlate->add_option("--classes", classes, "classes.txt")->check(CLI::ExistingFile);
  auto* ablate = app.add_subcommand("ablate", "train and compare the configured grid");
  common(ablate);
  ablate->add_option("--dataset", dataset, "dataset root with manifest.txt")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (!config.empty()) opt.config = config;
  opt.out = out;
  CLI::App* chosen = app.get_subcommands().front();
  if (chosen->count("--seed")) opt.seed = seed;
  if (threads > 0) {
    opt.threads = threads;
    omp_set_num_threads(threads);
  }
  auto optional_path = [](const std::string& s) { return s.empty() ? std::optional<fs::path>{} : fs::path(s); };

  try {
    if (chosen == synth) return cmd_synth(opt);
    if (chosen == pack) return cmd_pack(opt, dataset);
    if (chosen == train) return cmd_train(opt, dataset, optional_path(resume));
    if (chosen == eval) {
      return cmd_eval(opt, params, dataset, num_clips ? std::optional<std::size_t>(num_clips) : std::nullopt, split);
    }
    if (chosen == fuse) return cmd_fuse(opt, pred_a, pred_b, dataset, split);
    if (chosen == correlate) return cmd_correlate(opt, report_a, report_b, optional_path(classes));
    if (chosen == ablate) return cmd_ablate(opt, dataset);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}

}  // namespace resmotion::cli
