#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "trajkit/model.hpp"
#include "trajkit/scene.hpp"

namespace trajkit {

enum class OptimizerKind { radam, sgd };

struct TrainConfig {
  double learning_rate = 1e-5;
  std::int64_t batch_size = 16;
  std::int64_t epochs = 1;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::radam;
  double eval_fraction = 0.2;
  RasterConfig raster;
  std::string data_path;
  std::string mask_path;       // empty: every track usable
  std::string checkpoint_dir;  // also receives report.txt / report.csv
  std::string log_path;        // empty: no log file
};

void validate(const TrainConfig& cfg);

struct EpochRow {
  std::int64_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double eval_nll = 0.0;
  double eval_ade = 0.0;
  double eval_fde = 0.0;
  double wall_seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRow> rows;  // one per completed epoch
  std::string final_checkpoint;
};

// Wall time is deliberately absent from both renderings so that fixed-seed
// runs serialize bit-identically; it lives only in the in-memory rows.
std::string train_report_table(const TrainReport& report);
std::string train_report_csv(const TrainReport& report);

// Scene-granularity split after a seeded shuffle: the eval side takes the
// first llround(eval_fraction * n) shuffled scenes, clamped so both sides
// stay non-empty.
std::pair<std::vector<Scene>, std::vector<Scene>> split(
    const std::vector<Scene>& scenes, double eval_fraction, std::uint64_t seed);

struct EvalMetrics {
  double mean_nll = 0.0;
  double mean_ade = 0.0;
  double mean_fde = 0.0;
  std::int64_t samples = 0;
};

// Pure: rasterizes every admissible frame of every scene, in order, and
// averages per-sample nll / ade / fde.  Never touches parameters or grads.
EvalMetrics evaluate(const HybridModel& model, const std::vector<Scene>& scenes,
                     const TrainConfig& cfg, const AgentsMask& mask = {});

// Reads the corpus and optional mask, splits by cfg.seed, then runs
// cfg.epochs of shuffled mini-batches (per-epoch order seeded independently
// from the master seed).  Writes init.ckpt before the first step, one
// epoch-NNNN.ckpt per epoch, and report.txt / report.csv at the end.  A
// non-finite batch loss aborts: the offending epoch/step/batch goes to
// nan-abort.txt for replay and the same text rides the thrown error.
TrainReport train(const TrainConfig& cfg, HybridModel& model);

// Short training run used to score scaling candidates during grid search.
struct ProbeOptions {
  double learning_rate = 1e-3;
  std::int64_t batch_size = 4;
  std::int64_t epochs = 2;
  std::uint64_t seed = 0;
  double eval_fraction = 0.25;
  std::int64_t history_frames = 1;
  std::int64_t num_modes = 2;
  std::int64_t num_steps = 3;
};

// Grid-search score function body: builds a fresh model from `arch` (already
// scaled, so phi is frozen to 0), trains it for opt.epochs on a split of
// `scenes`, and returns the negated final eval nll so that higher is better.
// `coeffs` must have been vetted by the caller's constraint check.
double probe_score(const BaseArchitecture& arch,
                   const ScalingCoefficients& coeffs,
                   const std::vector<Scene>& scenes, const ProbeOptions& opt);

}  // namespace trajkit
