#include "trajkit/trajkit.h"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "trajkit/error.hpp"
#include "trajkit/model.hpp"
#include "trajkit/plot.hpp"
#include "trajkit/scaling.hpp"
#include "trajkit/scene.hpp"
#include "trajkit/train.hpp"

struct tk_scenes {
  std::vector<trajkit::Scene> scenes;
  trajkit::AgentsMask mask;
};

struct tk_model {
  trajkit::Checkpoint ckpt;
};

struct tk_train_report {
  trajkit::TrainReport report;
};

namespace {

thread_local std::string g_last_error = "ok";

tk_status map_kind(trajkit::ErrorKind kind) {
  switch (kind) {
    case trajkit::ErrorKind::invalid:
      return TK_ERR_INVALID;
    case trajkit::ErrorKind::io:
      return TK_ERR_IO;
    case trajkit::ErrorKind::numeric:
      return TK_ERR_NUMERIC;
    case trajkit::ErrorKind::constraint:
      return TK_ERR_CONSTRAINT;
    case trajkit::ErrorKind::not_found:
      return TK_ERR_NOT_FOUND;
  }
  return TK_ERR_INVALID;
}

template <typename Fn>
tk_status wrap(Fn&& fn) {
  try {
    fn();
    return TK_OK;
  } catch (const trajkit::Error& e) {
    g_last_error = e.what();
    return map_kind(e.kind());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return TK_ERR_INVALID;
  }
}

void check(bool condition, const char* message) {
  trajkit::require(condition, trajkit::ErrorKind::invalid, message);
}

trajkit::RasterConfig to_cpp(const tk_raster_config& c) {
  trajkit::RasterConfig r;
  if (c.size_px > 0) r.size_px = c.size_px;
  if (c.resolution > 0.0) r.resolution = c.resolution;
  if (c.history_frames >= 0) r.history_frames = c.history_frames;
  if (c.future_frames > 0) r.future_frames = c.future_frames;
  if (c.ego_center_x > 0.0) r.ego_center_x = c.ego_center_x;
  if (c.ego_center_y > 0.0) r.ego_center_y = c.ego_center_y;
  return r;
}

}  // namespace

extern "C" {

const char* tk_last_error(void) { return g_last_error.c_str(); }

/* ------------------------------------------------------------------ */

void tk_raster_config_default(tk_raster_config* cfg) {
  if (!cfg) {
    return;
  }
  const trajkit::RasterConfig d;
  cfg->size_px = d.size_px;
  cfg->resolution = d.resolution;
  cfg->history_frames = d.history_frames;
  cfg->future_frames = d.future_frames;
  cfg->ego_center_x = d.ego_center_x;
  cfg->ego_center_y = d.ego_center_y;
}

tk_status tk_scenes_generate(uint64_t seed, int64_t num_scenes,
                             int64_t frames_per_scene, const char* motion,
                             tk_scenes** out) {
  return wrap([&] {
    check(motion != nullptr && out != nullptr, "null argument");
    auto handle = std::make_unique<tk_scenes>();
    handle->scenes = trajkit::generate_synthetic(
        seed, num_scenes, frames_per_scene,
        trajkit::motion_from_string(motion));
    *out = handle.release();
  });
}

tk_status tk_scenes_open(const char* scenes_path, const char* mask_path,
                         tk_scenes** out) {
  return wrap([&] {
    check(scenes_path != nullptr && out != nullptr, "null argument");
    auto handle = std::make_unique<tk_scenes>();
    handle->scenes = trajkit::read_scenes(scenes_path);
    if (mask_path) {
      handle->mask = trajkit::read_mask(mask_path);
    }
    *out = handle.release();
  });
}

tk_status tk_scenes_add_mask(tk_scenes* scenes, uint64_t seed,
                             double unusable_fraction) {
  return wrap([&] {
    check(scenes != nullptr, "null argument");
    scenes->mask =
        trajkit::generate_mask(scenes->scenes, seed, unusable_fraction);
  });
}

tk_status tk_scenes_save(const tk_scenes* scenes, const char* scenes_path,
                         const char* mask_path) {
  return wrap([&] {
    check(scenes != nullptr && scenes_path != nullptr, "null argument");
    trajkit::write_scenes(scenes->scenes, scenes_path);
    if (mask_path) {
      trajkit::write_mask(scenes->mask, mask_path);
    }
  });
}

tk_status tk_scenes_stats(const tk_scenes* scenes, int64_t* num_scenes,
                          int64_t* num_frames, int64_t* num_tracks,
                          int64_t* num_masked) {
  return wrap([&] {
    check(scenes != nullptr, "null argument");
    int64_t frames = 0;
    std::set<std::pair<std::string, std::string>> tracks;
    for (const trajkit::Scene& scene : scenes->scenes) {
      frames += static_cast<int64_t>(scene.frames.size());
      for (const trajkit::Frame& frame : scene.frames) {
        for (const trajkit::AgentState& agent : frame.agents) {
          tracks.insert({scene.id, agent.track_id});
        }
      }
    }
    int64_t masked = 0;
    for (const auto& [key, usable] : scenes->mask.entries()) {
      masked += usable ? 0 : 1;
    }
    if (num_scenes) *num_scenes = static_cast<int64_t>(scenes->scenes.size());
    if (num_frames) *num_frames = frames;
    if (num_tracks) *num_tracks = static_cast<int64_t>(tracks.size());
    if (num_masked) *num_masked = masked;
  });
}

tk_status tk_scenes_sample_count(const tk_scenes* scenes,
                                 const tk_raster_config* cfg, int64_t* out) {
  return wrap([&] {
    check(scenes != nullptr && cfg != nullptr && out != nullptr,
          "null argument");
    const trajkit::RasterConfig raster = to_cpp(*cfg);
    int64_t total = 0;
    for (const trajkit::Scene& scene : scenes->scenes) {
      total +=
          static_cast<int64_t>(trajkit::sample_frames(scene, raster).size());
    }
    *out = total;
  });
}

void tk_scenes_free(tk_scenes* scenes) { delete scenes; }

/* ------------------------------------------------------------------ */

void tk_model_config_default(tk_model_config* cfg) {
  if (!cfg) {
    return;
  }
  std::memset(cfg, 0, sizeof(*cfg));
}

tk_status tk_model_build(const tk_model_config* cfg, tk_model** out) {
  return wrap([&] {
    check(cfg != nullptr && out != nullptr, "null argument");
    trajkit::BaseArchitecture base;
    if (cfg->num_stages > 0) {
      check(cfg->stage_layers != nullptr && cfg->stage_channels != nullptr,
            "stage arrays are required when num_stages > 0");
      base.stage_layers.assign(cfg->stage_layers,
                               cfg->stage_layers + cfg->num_stages);
      base.stage_channels.assign(cfg->stage_channels,
                                 cfg->stage_channels + cfg->num_stages);
    }
    if (cfg->input_resolution > 0) {
      base.input_resolution = cfg->input_resolution;
    }
    trajkit::ScalingCoefficients coeffs;
    coeffs.alpha = cfg->alpha > 0.0 ? cfg->alpha : 1.2;
    coeffs.beta = cfg->beta > 0.0 ? cfg->beta : 1.1;
    coeffs.gamma = cfg->gamma > 0.0 ? cfg->gamma : 1.15;
    coeffs.phi = cfg->phi;
    const int64_t K = cfg->num_modes > 0 ? cfg->num_modes : 3;
    const int64_t T = cfg->num_steps > 0 ? cfg->num_steps : 16;
    const int64_t in_ch = cfg->in_channels > 0 ? cfg->in_channels : 11;
    const double tol = cfg->constraint_tol > 0.0 ? cfg->constraint_tol : 0.1;

    auto handle = std::make_unique<tk_model>();
    handle->ckpt.model =
        trajkit::build(base, coeffs, K, T, cfg->seed, in_ch, tol);
    *out = handle.release();
  });
}

tk_status tk_model_load(const char* path, tk_model** out) {
  return wrap([&] {
    check(path != nullptr && out != nullptr, "null argument");
    auto handle = std::make_unique<tk_model>();
    handle->ckpt = trajkit::load_checkpoint(path);
    *out = handle.release();
  });
}

tk_status tk_model_save(const tk_model* model, const char* path) {
  return wrap([&] {
    check(model != nullptr && path != nullptr, "null argument");
    if (model->ckpt.has_optimizer) {
      trajkit::RAdam optimizer(trajkit::parameters(model->ckpt.model),
                               model->ckpt.opt_config);
      optimizer.restore(model->ckpt.opt_state);
      trajkit::save_checkpoint(model->ckpt.model, &optimizer, path);
    } else {
      trajkit::save_checkpoint(model->ckpt.model, nullptr, path);
    }
  });
}

tk_status tk_model_get_info(const tk_model* model, tk_model_info* out) {
  return wrap([&] {
    check(model != nullptr && out != nullptr, "null argument");
    const trajkit::HybridModel& m = model->ckpt.model;
    out->num_stages = static_cast<int64_t>(m.scaled.stage_layers.size());
    out->input_resolution = m.scaled.input_resolution;
    out->in_channels = m.in_channels;
    out->num_modes = m.num_modes();
    out->num_steps = m.num_steps();
    out->parameter_count = trajkit::parameter_count(m);
    out->flops_proxy = trajkit::flops_proxy(m.scaled);
    out->alpha = m.coeffs.alpha;
    out->beta = m.coeffs.beta;
    out->gamma = m.coeffs.gamma;
    out->phi = m.coeffs.phi;
  });
}

tk_status tk_model_stage(const tk_model* model, int64_t index, int64_t* layers,
                         int64_t* channels) {
  return wrap([&] {
    check(model != nullptr, "null argument");
    const trajkit::BaseArchitecture& arch = model->ckpt.model.scaled;
    check(index >= 0 &&
              index < static_cast<int64_t>(arch.stage_layers.size()),
          "stage index out of range");
    if (layers) *layers = arch.stage_layers[static_cast<std::size_t>(index)];
    if (channels) {
      *channels = arch.stage_channels[static_cast<std::size_t>(index)];
    }
  });
}

void tk_model_free(tk_model* model) { delete model; }

/* ------------------------------------------------------------------ */

void tk_train_config_default(tk_train_config* cfg) {
  if (!cfg) {
    return;
  }
  std::memset(cfg, 0, sizeof(*cfg));
  tk_raster_config_default(&cfg->raster);
  cfg->epochs = 1;
}

tk_status tk_train(tk_model* model, const tk_train_config* cfg,
                   tk_train_report** out) {
  return wrap([&] {
    check(model != nullptr && cfg != nullptr && out != nullptr,
          "null argument");
    check(cfg->data_path != nullptr && cfg->checkpoint_dir != nullptr,
          "data_path and checkpoint_dir are required");
    trajkit::TrainConfig tc;
    if (cfg->learning_rate > 0.0) tc.learning_rate = cfg->learning_rate;
    if (cfg->batch_size > 0) tc.batch_size = cfg->batch_size;
    tc.epochs = cfg->epochs;
    tc.seed = cfg->seed;
    tc.optimizer = cfg->use_sgd ? trajkit::OptimizerKind::sgd
                                : trajkit::OptimizerKind::radam;
    if (cfg->eval_fraction > 0.0) tc.eval_fraction = cfg->eval_fraction;
    tc.raster = to_cpp(cfg->raster);
    tc.data_path = cfg->data_path;
    if (cfg->mask_path) tc.mask_path = cfg->mask_path;
    tc.checkpoint_dir = cfg->checkpoint_dir;
    if (cfg->log_path) tc.log_path = cfg->log_path;

    auto handle = std::make_unique<tk_train_report>();
    handle->report = trajkit::train(tc, model->ckpt.model);
    // Optimizer state from before training no longer matches the model; the
    // epoch checkpoints on disk carry the live state.
    model->ckpt.has_optimizer = false;
    *out = handle.release();
  });
}

tk_status tk_train_report_size(const tk_train_report* report, int64_t* rows) {
  return wrap([&] {
    check(report != nullptr && rows != nullptr, "null argument");
    *rows = static_cast<int64_t>(report->report.rows.size());
  });
}

tk_status tk_train_report_row(const tk_train_report* report, int64_t index,
                              tk_epoch_row* out) {
  return wrap([&] {
    check(report != nullptr && out != nullptr, "null argument");
    check(index >= 0 &&
              index < static_cast<int64_t>(report->report.rows.size()),
          "report row index out of range");
    const trajkit::EpochRow& row =
        report->report.rows[static_cast<std::size_t>(index)];
    out->epoch = row.epoch;
    out->train_loss = row.train_loss;
    out->eval_nll = row.eval_nll;
    out->eval_ade = row.eval_ade;
    out->eval_fde = row.eval_fde;
    out->wall_seconds = row.wall_seconds;
  });
}

const char* tk_train_report_final_checkpoint(const tk_train_report* report) {
  return report ? report->report.final_checkpoint.c_str() : "";
}

void tk_train_report_free(tk_train_report* report) { delete report; }

tk_status tk_evaluate(const tk_model* model, const tk_scenes* scenes,
                      const tk_raster_config* raster, int64_t batch_size,
                      tk_eval_metrics* out) {
  return wrap([&] {
    check(model != nullptr && scenes != nullptr && raster != nullptr &&
              out != nullptr,
          "null argument");
    trajkit::TrainConfig tc;
    tc.batch_size = batch_size > 0 ? batch_size : 16;
    tc.raster = to_cpp(*raster);
    const trajkit::EvalMetrics metrics = trajkit::evaluate(
        model->ckpt.model, scenes->scenes, tc, scenes->mask);
    out->mean_nll = metrics.mean_nll;
    out->mean_ade = metrics.mean_ade;
    out->mean_fde = metrics.mean_fde;
    out->samples = metrics.samples;
  });
}

/* ------------------------------------------------------------------ */

tk_status tk_predict(const tk_model* model, const tk_scenes* scenes,
                     const char* scene_id, int64_t frame,
                     const tk_raster_config* raster,
                     const char* prediction_path, const char* plot_path,
                     double* confidences_out) {
  return wrap([&] {
    check(model != nullptr && scenes != nullptr && scene_id != nullptr &&
              raster != nullptr,
          "null argument");
    const trajkit::RasterConfig cfg = to_cpp(*raster);

    const trajkit::Scene* scene = nullptr;
    for (const trajkit::Scene& s : scenes->scenes) {
      if (s.id == scene_id) {
        scene = &s;
        break;
      }
    }
    if (!scene) {
      trajkit::fail(trajkit::ErrorKind::not_found,
                    "scene '" + std::string(scene_id) + "' not found in corpus");
    }
    const auto frames = trajkit::sample_frames(*scene, cfg);
    if (std::find(frames.begin(), frames.end(), frame) == frames.end()) {
      trajkit::fail(trajkit::ErrorKind::not_found,
                    "frame " + std::to_string(frame) + " of scene '" +
                        scene->id +
                        "' does not admit a full history and future window");
    }

    const trajkit::Sample sample =
        trajkit::rasterize(*scene, frame, cfg, scenes->mask);
    const trajkit::TrajectoryPrediction pred =
        trajkit::forward(model->ckpt.model, sample.raster);
    const trajkit::PredictionRecord record = trajkit::to_record(pred);

    if (prediction_path) {
      trajkit::write_prediction(record, prediction_path);
    }
    if (plot_path) {
      const trajkit::GroundTruth gt{sample.target, sample.availability};
      trajkit::write_plot_svg(record, gt, plot_path);
    }
    if (confidences_out) {
      std::copy(record.confidences.begin(), record.confidences.end(),
                confidences_out);
    }
  });
}

/* ------------------------------------------------------------------ */

void tk_search_options_default(tk_search_options* options) {
  if (!options) {
    return;
  }
  const trajkit::GridSearchOptions d;
  options->lower = d.lower;
  options->upper = d.upper;
  options->grid_step = d.grid_step;
  options->tol = d.tol;
  options->seed = 0;
}

tk_status tk_scale_search(const tk_scenes* scenes,
                          const tk_search_options* options,
                          const char* report_csv_path, tk_search_best* out) {
  return wrap([&] {
    check(scenes != nullptr && options != nullptr && out != nullptr,
          "null argument");
    trajkit::GridSearchOptions grid;
    if (options->lower > 0.0) grid.lower = options->lower;
    if (options->upper > 0.0) grid.upper = options->upper;
    if (options->grid_step > 0.0) grid.grid_step = options->grid_step;
    if (options->tol > 0.0) grid.tol = options->tol;

    // Smallest valid backbone: candidate triples scale it up from here.
    trajkit::BaseArchitecture probe_base;
    probe_base.stage_layers = {1, 1};
    probe_base.stage_channels = {8, 8};
    probe_base.input_resolution = 32;

    trajkit::ProbeOptions probe;
    probe.seed = options->seed;

    const trajkit::GridSearchResult result = trajkit::grid_search(
        probe_base,
        [&](const trajkit::BaseArchitecture& arch,
            const trajkit::ScalingCoefficients& coeffs) {
          return trajkit::probe_score(arch, coeffs, scenes->scenes, probe);
        },
        grid);

    if (report_csv_path) {
      std::ofstream csv(report_csv_path);
      trajkit::require(csv.good(), trajkit::ErrorKind::io,
                       "cannot write " + std::string(report_csv_path));
      csv << trajkit::grid_report_csv(result.report);
      trajkit::require(csv.good(), trajkit::ErrorKind::io,
                       "write failed for " + std::string(report_csv_path));
    }

    out->alpha = result.best.alpha;
    out->beta = result.best.beta;
    out->gamma = result.best.gamma;
    out->product = trajkit::constraint_product(result.best);
    out->score = 0.0;
    out->rows = static_cast<int64_t>(result.report.size());
    out->feasible = 0;
    for (const trajkit::GridPoint& point : result.report) {
      out->feasible += point.feasible ? 1 : 0;
      if (point.feasible && point.coeffs.alpha == result.best.alpha &&
          point.coeffs.beta == result.best.beta &&
          point.coeffs.gamma == result.best.gamma) {
        out->score = point.score;
      }
    }
  });
}

} /* extern "C" */
