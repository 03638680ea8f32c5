#include "trajkit/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "trajkit/error.hpp"
#include "trajkit/loss.hpp"

namespace trajkit {

namespace {

struct SampleRef {
  std::size_t scene = 0;
  std::int64_t frame = 0;
};

std::vector<SampleRef> index_samples(const std::vector<Scene>& scenes,
                                     const RasterConfig& raster) {
  std::vector<SampleRef> refs;
  for (std::size_t si = 0; si < scenes.size(); ++si) {
    for (std::int64_t frame : sample_frames(scenes[si], raster)) {
      refs.push_back({si, frame});
    }
  }
  return refs;
}

void shuffle(std::vector<SampleRef>& refs, Rng& rng) {
  for (std::size_t i = refs.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(refs[i - 1], refs[j]);
  }
}

void check_compatible(const HybridModel& model, const RasterConfig& raster) {
  require(model.in_channels == raster_channels(raster), ErrorKind::invalid,
          "model expects " + std::to_string(model.in_channels) +
              " input channels, raster config yields " +
              std::to_string(raster_channels(raster)));
  require(model.scaled.input_resolution == raster.size_px, ErrorKind::invalid,
          "model expects " + std::to_string(model.scaled.input_resolution) +
              " px input, raster config yields " +
              std::to_string(raster.size_px));
  require(model.num_steps() == raster.future_frames, ErrorKind::invalid,
          "model predicts " + std::to_string(model.num_steps()) +
              " steps, raster config yields " +
              std::to_string(raster.future_frames));
}

struct Batch {
  Tensor rasters;
  std::vector<GroundTruth> gts;
};

Batch assemble(const std::vector<Scene>& scenes,
               const std::vector<SampleRef>& refs, std::size_t start,
               std::size_t count, const RasterConfig& raster,
               const AgentsMask& mask) {
  std::vector<Tensor> images;
  Batch batch;
  for (std::size_t i = start; i < start + count; ++i) {
    Sample sample = rasterize(scenes[refs[i].scene], refs[i].frame, raster, mask);
    images.push_back(sample.raster);
    batch.gts.push_back({std::move(sample.target), std::move(sample.availability)});
  }
  batch.rasters = stack_rasters(images);
  return batch;
}

void append_line(const std::string& path, const char* line) {
  if (path.empty()) {
    return;
  }
  std::ofstream out(path, std::ios::app);
  require(out.good(), ErrorKind::io, "cannot write " + path);
  out << line;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::io, "cannot write " + path);
  out << text;
  require(out.good(), ErrorKind::io, "write failed for " + path);
}

}  // namespace

void validate(const TrainConfig& cfg) {
  require(cfg.learning_rate > 0.0, ErrorKind::invalid,
          "learning_rate must be positive");
  require(cfg.batch_size >= 1, ErrorKind::invalid, "batch_size must be >= 1");
  require(cfg.epochs >= 0, ErrorKind::invalid, "epochs must be >= 0");
  require(cfg.eval_fraction > 0.0 && cfg.eval_fraction < 1.0,
          ErrorKind::invalid, "eval_fraction must lie in (0, 1)");
  require(!cfg.data_path.empty(), ErrorKind::invalid, "data_path is required");
  require(!cfg.checkpoint_dir.empty(), ErrorKind::invalid,
          "checkpoint_dir is required");
  validate(cfg.raster);
}

std::string train_report_table(const TrainReport& report) {
  std::string text =
      "epoch          train_loss            eval_nll      eval_ade      eval_fde\n";
  char line[160];
  for (const EpochRow& row : report.rows) {
    std::snprintf(line, sizeof(line), "%5lld  %18.12e  %18.12e  %12.6f  %12.6f\n",
                  static_cast<long long>(row.epoch), row.train_loss,
                  row.eval_nll, row.eval_ade, row.eval_fde);
    text += line;
  }
  text += "final checkpoint: " + report.final_checkpoint + "\n";
  return text;
}

std::string train_report_csv(const TrainReport& report) {
  std::string text = "epoch,train_loss,eval_nll,eval_ade,eval_fde\n";
  char line[200];
  for (const EpochRow& row : report.rows) {
    std::snprintf(line, sizeof(line), "%lld,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(row.epoch), row.train_loss,
                  row.eval_nll, row.eval_ade, row.eval_fde);
    text += line;
  }
  return text;
}

std::pair<std::vector<Scene>, std::vector<Scene>> split(
    const std::vector<Scene>& scenes, double eval_fraction, std::uint64_t seed) {
  require(eval_fraction > 0.0 && eval_fraction < 1.0, ErrorKind::invalid,
          "eval_fraction must lie in (0, 1)");
  const std::int64_t n = static_cast<std::int64_t>(scenes.size());
  require(n >= 2, ErrorKind::invalid,
          "need at least 2 scenes to split, got " + std::to_string(n));

  std::vector<std::size_t> order(scenes.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
  }
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }

  std::int64_t eval_count =
      std::llround(eval_fraction * static_cast<double>(n));
  eval_count = std::max<std::int64_t>(1, std::min(eval_count, n - 1));

  std::pair<std::vector<Scene>, std::vector<Scene>> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (static_cast<std::int64_t>(i) < eval_count) {
      out.second.push_back(scenes[order[i]]);
    } else {
      out.first.push_back(scenes[order[i]]);
    }
  }
  return out;
}

EvalMetrics evaluate(const HybridModel& model, const std::vector<Scene>& scenes,
                     const TrainConfig& cfg, const AgentsMask& mask) {
  require(cfg.batch_size >= 1, ErrorKind::invalid, "batch_size must be >= 1");
  check_compatible(model, cfg.raster);
  const std::vector<SampleRef> refs = index_samples(scenes, cfg.raster);
  require(!refs.empty(), ErrorKind::invalid,
          "evaluation set yields no samples");

  EvalMetrics metrics;
  for (std::size_t start = 0; start < refs.size();
       start += static_cast<std::size_t>(cfg.batch_size)) {
    const std::size_t count = std::min(
        static_cast<std::size_t>(cfg.batch_size), refs.size() - start);
    Batch batch = assemble(scenes, refs, start, count, cfg.raster, mask);
    const auto preds = forward_batch(model, batch.rasters);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      metrics.mean_nll += nll_loss(preds[i], batch.gts[i]).item();
      metrics.mean_ade += ade(preds[i], batch.gts[i]);
      metrics.mean_fde += fde(preds[i], batch.gts[i]);
    }
    metrics.samples += static_cast<std::int64_t>(count);
  }
  metrics.mean_nll /= static_cast<double>(metrics.samples);
  metrics.mean_ade /= static_cast<double>(metrics.samples);
  metrics.mean_fde /= static_cast<double>(metrics.samples);
  return metrics;
}

TrainReport train(const TrainConfig& cfg, HybridModel& model) {
  validate(cfg);
  check_compatible(model, cfg.raster);

  const std::vector<Scene> scenes = read_scenes(cfg.data_path);
  const AgentsMask mask =
      cfg.mask_path.empty() ? AgentsMask{} : read_mask(cfg.mask_path);
  auto [train_scenes, eval_scenes] = split(scenes, cfg.eval_fraction, cfg.seed);

  std::vector<SampleRef> refs = index_samples(train_scenes, cfg.raster);
  require(!refs.empty(), ErrorKind::invalid,
          "training split yields no samples");

  std::filesystem::create_directories(cfg.checkpoint_dir);
  const std::filesystem::path dir(cfg.checkpoint_dir);

  std::vector<Tensor> params = parameters(model);
  std::optional<RAdam> radam;
  if (cfg.optimizer == OptimizerKind::radam) {
    RAdamConfig oc;
    oc.lr = cfg.learning_rate;
    radam.emplace(params, oc);
  }
  const RAdam* opt_ptr = radam ? &*radam : nullptr;

  TrainReport report;
  report.final_checkpoint = (dir / "init.ckpt").string();
  save_checkpoint(model, opt_ptr, report.final_checkpoint);

  char line[256];
  std::int64_t global_step = 0;
  for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffle_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    shuffle(refs, shuffle_rng);

    double loss_sum = 0.0;
    std::int64_t seen = 0;
    for (std::size_t start = 0; start < refs.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count = std::min(
          static_cast<std::size_t>(cfg.batch_size), refs.size() - start);
      Batch batch =
          assemble(train_scenes, refs, start, count, cfg.raster, mask);

      for (Tensor& p : params) {
        p.zero_grad();
      }
      Tensor loss = batch_nll(forward_batch(model, batch.rasters), batch.gts);
      const double value = loss.item();
      ++global_step;

      if (!std::isfinite(value)) {
        std::snprintf(line, sizeof(line), "epoch %lld step %lld batch %lld\n",
                      static_cast<long long>(epoch),
                      static_cast<long long>(global_step),
                      static_cast<long long>(
                          start / static_cast<std::size_t>(cfg.batch_size)));
        const std::string marker = (dir / "nan-abort.txt").string();
        write_text(marker, line);
        fail(ErrorKind::numeric,
             "non-finite training loss at " + std::string(line, std::strlen(line) - 1) +
                 " (persisted to " + marker + ")");
      }

      backward(loss);
      if (radam) {
        radam->step();
      } else {
        sgd_step(params, cfg.learning_rate);
      }

      std::snprintf(line, sizeof(line), "epoch %lld step %lld loss %.12e\n",
                    static_cast<long long>(epoch),
                    static_cast<long long>(global_step), value);
      append_line(cfg.log_path, line);
      loss_sum += value * static_cast<double>(count);
      seen += static_cast<std::int64_t>(count);
    }

    const EvalMetrics metrics = evaluate(model, eval_scenes, cfg, mask);

    std::snprintf(line, sizeof(line), "epoch-%04lld.ckpt",
                  static_cast<long long>(epoch));
    report.final_checkpoint = (dir / line).string();
    save_checkpoint(model, opt_ptr, report.final_checkpoint);

    EpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(seen);
    row.eval_nll = metrics.mean_nll;
    row.eval_ade = metrics.mean_ade;
    row.eval_fde = metrics.mean_fde;
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    report.rows.push_back(row);

    std::snprintf(line, sizeof(line),
                  "epoch %lld train %.12e eval %.12e ade %.12e fde %.12e\n",
                  static_cast<long long>(epoch), row.train_loss, row.eval_nll,
                  row.eval_ade, row.eval_fde);
    append_line(cfg.log_path, line);
  }

  write_text((dir / "report.txt").string(), train_report_table(report));
  write_text((dir / "report.csv").string(), train_report_csv(report));
  return report;
}

double probe_score(const BaseArchitecture& arch,
                   const ScalingCoefficients& coeffs,
                   const std::vector<Scene>& scenes, const ProbeOptions& opt) {
  ScalingCoefficients frozen = coeffs;
  frozen.phi = 0.0;
  const std::int64_t in_ch = 2 * opt.history_frames + 3;
  HybridModel model = build(arch, frozen, opt.num_modes, opt.num_steps,
                            opt.seed, in_ch, /*constraint_tol=*/1e9);

  TrainConfig cfg;
  cfg.batch_size = opt.batch_size;
  cfg.raster.size_px = arch.input_resolution;
  cfg.raster.history_frames = opt.history_frames;
  cfg.raster.future_frames = opt.num_steps;

  auto [train_scenes, eval_scenes] = split(scenes, opt.eval_fraction, opt.seed);
  std::vector<SampleRef> refs = index_samples(train_scenes, cfg.raster);
  require(!refs.empty(), ErrorKind::invalid, "probe corpus yields no samples");

  std::vector<Tensor> params = parameters(model);
  RAdamConfig oc;
  oc.lr = opt.learning_rate;
  RAdam optimizer(params, oc);

  const AgentsMask no_mask;
  for (std::int64_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(opt.seed, static_cast<std::uint64_t>(epoch)));
    shuffle(refs, shuffle_rng);
    for (std::size_t start = 0; start < refs.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count = std::min(
          static_cast<std::size_t>(cfg.batch_size), refs.size() - start);
      Batch batch =
          assemble(train_scenes, refs, start, count, cfg.raster, no_mask);
      for (Tensor& p : params) {
        p.zero_grad();
      }
      Tensor loss = batch_nll(forward_batch(model, batch.rasters), batch.gts);
      require(std::isfinite(loss.item()), ErrorKind::numeric,
              "non-finite probe loss");
      backward(loss);
      optimizer.step();
    }
  }
  return -evaluate(model, eval_scenes, cfg, no_mask).mean_nll;
}

}  // namespace trajkit
