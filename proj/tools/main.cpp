#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "trajkit/trajkit.h"

namespace {

using nlohmann::ordered_json;

// 0 success, 2 missing/unreadable artifacts, 3 numeric abort, 4 infeasible
// scaling constraint; anything else is a usage error.
int exit_code(tk_status status) {
  switch (status) {
    case TK_OK: return 0;
    case TK_ERR_IO: return 2;
    case TK_ERR_NOT_FOUND: return 2;
    case TK_ERR_NUMERIC: return 3;
    case TK_ERR_CONSTRAINT: return 4;
    default: return 1;
  }
}

int fail(tk_status status) {
  std::fprintf(stderr, "error: %s\n", tk_last_error());
  return exit_code(status);
}

struct Scenes {
  tk_scenes* handle = nullptr;
  Scenes() = default;
  Scenes(const Scenes&) = delete;
  Scenes& operator=(const Scenes&) = delete;
  ~Scenes() { tk_scenes_free(handle); }
};

struct Model {
  tk_model* handle = nullptr;
  Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  ~Model() { tk_model_free(handle); }
};

struct Report {
  tk_train_report* handle = nullptr;
  Report() = default;
  Report(const Report&) = delete;
  Report& operator=(const Report&) = delete;
  ~Report() { tk_train_report_free(handle); }
};

int open_scenes(const std::string& data, const std::string& mask,
                Scenes* scenes) {
  const tk_status st = tk_scenes_open(
      data.c_str(), mask.empty() ? nullptr : mask.c_str(), &scenes->handle);
  return st == TK_OK ? 0 : fail(st);
}

int load_model(const std::string& path, Model* model) {
  const tk_status st = tk_model_load(path.c_str(), &model->handle);
  return st == TK_OK ? 0 : fail(st);
}

// The raster must reproduce the checkpoint's input contract: resolution and
// horizon come from the model, history from its channel count (2h + 3).
tk_raster_config derive_raster(const tk_model_info& info, int64_t history,
                               double resolution) {
  tk_raster_config raster;
  tk_raster_config_default(&raster);
  raster.size_px = info.input_resolution;
  raster.future_frames = info.num_steps;
  raster.history_frames =
      history >= 0 ? history : (info.in_channels - 3) / 2;
  raster.resolution = resolution;
  return raster;
}

struct GenArgs {
  uint64_t seed = 0;
  int64_t scenes = 16;
  int64_t frames = 25;
  std::string motion = "constant_velocity";
  std::string out;
  std::string mask;
  double mask_fraction = 0.25;
  bool json = false;
};

int run_gen(const GenArgs& args) {
  Scenes scenes;
  tk_status st = tk_scenes_generate(args.seed, args.scenes, args.frames,
                                    args.motion.c_str(), &scenes.handle);
  if (st != TK_OK) return fail(st);
  if (!args.mask.empty()) {
    st = tk_scenes_add_mask(scenes.handle, args.seed, args.mask_fraction);
    if (st != TK_OK) return fail(st);
  }
  st = tk_scenes_save(scenes.handle, args.out.c_str(),
                      args.mask.empty() ? nullptr : args.mask.c_str());
  if (st != TK_OK) return fail(st);

  int64_t n = 0;
  int64_t frames = 0;
  int64_t tracks = 0;
  int64_t masked = 0;
  st = tk_scenes_stats(scenes.handle, &n, &frames, &tracks, &masked);
  if (st != TK_OK) return fail(st);
  if (args.json) {
    ordered_json j;
    j["scenes"] = n;
    j["frames"] = frames;
    j["tracks"] = tracks;
    j["masked"] = masked;
    j["out"] = args.out;
    if (!args.mask.empty()) j["mask"] = args.mask;
    std::printf("%s\n", j.dump().c_str());
  } else {
    std::printf("scenes %" PRId64 " frames %" PRId64 " tracks %" PRId64
                " masked %" PRId64 "\n",
                n, frames, tracks, masked);
  }
  return 0;
}

struct InspectArgs {
  std::string data;
  std::string mask;
  std::string ckpt;
  int64_t raster_px = 64;
  double raster_res = 0.5;
  int64_t history = 4;
  int64_t future = 16;
  bool json = false;
};

int run_inspect(const InspectArgs& args) {
  if (!args.ckpt.empty()) {
    Model model;
    if (const int rc = load_model(args.ckpt, &model)) return rc;
    tk_model_info info;
    tk_status st = tk_model_get_info(model.handle, &info);
    if (st != TK_OK) return fail(st);
    std::vector<int64_t> layers(info.num_stages);
    std::vector<int64_t> channels(info.num_stages);
    for (int64_t i = 0; i < info.num_stages; ++i) {
      st = tk_model_stage(model.handle, i, &layers[i], &channels[i]);
      if (st != TK_OK) return fail(st);
    }
    if (args.json) {
      ordered_json j;
      j["stages"] = info.num_stages;
      j["layers"] = layers;
      j["channels"] = channels;
      j["resolution"] = info.input_resolution;
      j["in_channels"] = info.in_channels;
      j["modes"] = info.num_modes;
      j["steps"] = info.num_steps;
      j["parameters"] = info.parameter_count;
      j["flops"] = info.flops_proxy;
      j["alpha"] = info.alpha;
      j["beta"] = info.beta;
      j["gamma"] = info.gamma;
      j["phi"] = info.phi;
      std::printf("%s\n", j.dump().c_str());
    } else {
      std::printf("stages %" PRId64 "\n", info.num_stages);
      for (int64_t i = 0; i < info.num_stages; ++i) {
        std::printf("stage %" PRId64 " layers %" PRId64 " channels %" PRId64
                    "\n",
                    i, layers[i], channels[i]);
      }
      std::printf("resolution %" PRId64 "\n", info.input_resolution);
      std::printf("in_channels %" PRId64 "\n", info.in_channels);
      std::printf("modes %" PRId64 "\n", info.num_modes);
      std::printf("steps %" PRId64 "\n", info.num_steps);
      std::printf("parameters %" PRId64 "\n", info.parameter_count);
      std::printf("flops %.17g\n", info.flops_proxy);
      std::printf("alpha %.17g beta %.17g gamma %.17g phi %.17g\n", info.alpha,
                  info.beta, info.gamma, info.phi);
    }
    return 0;
  }

  Scenes scenes;
  if (const int rc = open_scenes(args.data, args.mask, &scenes)) return rc;
  int64_t n = 0;
  int64_t frames = 0;
  int64_t tracks = 0;
  int64_t masked = 0;
  tk_status st = tk_scenes_stats(scenes.handle, &n, &frames, &tracks, &masked);
  if (st != TK_OK) return fail(st);
  tk_raster_config raster;
  tk_raster_config_default(&raster);
  raster.size_px = args.raster_px;
  raster.resolution = args.raster_res;
  raster.history_frames = args.history;
  raster.future_frames = args.future;
  int64_t samples = 0;
  st = tk_scenes_sample_count(scenes.handle, &raster, &samples);
  if (st != TK_OK) return fail(st);
  if (args.json) {
    ordered_json j;
    j["scenes"] = n;
    j["frames"] = frames;
    j["tracks"] = tracks;
    j["masked"] = masked;
    j["samples"] = samples;
    std::printf("%s\n", j.dump().c_str());
  } else {
    std::printf("scenes %" PRId64 " frames %" PRId64 " tracks %" PRId64
                " masked %" PRId64 " samples %" PRId64 "\n",
                n, frames, tracks, masked, samples);
  }
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string mask;
  std::string out;
  std::string log;
  double lr = 1e-5;
  int64_t batch = 16;
  std::string optimizer = "radam";
  int64_t epochs = 1;
  uint64_t seed = 0;
  double eval_fraction = 0.2;
  std::vector<int64_t> layers{2, 2, 2, 2};
  std::vector<int64_t> channels{16, 32, 64, 128};
  int64_t resolution = 64;
  int64_t modes = 3;
  int64_t steps = 16;
  int64_t history = 4;
  double raster_res = 0.5;
  double alpha = 1.2;
  double beta = 1.1;
  double gamma = 1.15;
  double phi = 0.0;
  double tol = 0.1;
  bool search = false;
  double grid_step = 0.05;
  double lower = 1.0;
  double upper = 2.0;
  bool json = false;
};

int run_train(const TrainArgs& args) {
  Scenes scenes;
  if (const int rc = open_scenes(args.data, args.mask, &scenes)) return rc;

  double alpha = args.alpha;
  double beta = args.beta;
  double gamma = args.gamma;
  tk_search_best best = {};
  bool searched = false;
  if (args.search) {
    tk_search_options options;
    tk_search_options_default(&options);
    options.lower = args.lower;
    options.upper = args.upper;
    options.grid_step = args.grid_step;
    options.tol = args.tol;
    options.seed = args.seed;
    const tk_status st =
        tk_scale_search(scenes.handle, &options, nullptr, &best);
    if (st != TK_OK) return fail(st);
    alpha = best.alpha;
    beta = best.beta;
    gamma = best.gamma;
    searched = true;
    if (!args.json) {
      std::printf("search alpha %.6g beta %.6g gamma %.6g product %.6g score "
                  "%.17g\n",
                  best.alpha, best.beta, best.gamma, best.product, best.score);
    }
  }

  tk_model_config mc;
  tk_model_config_default(&mc);
  mc.stage_layers = args.layers.data();
  mc.stage_channels = args.channels.data();
  mc.num_stages = args.layers.size();
  mc.input_resolution = args.resolution;
  mc.num_modes = args.modes;
  mc.num_steps = args.steps;
  mc.in_channels = 2 * args.history + 3;
  mc.alpha = alpha;
  mc.beta = beta;
  mc.gamma = gamma;
  mc.phi = args.phi;
  mc.constraint_tol = args.tol;
  mc.seed = args.seed;
  Model model;
  tk_status st = tk_model_build(&mc, &model.handle);
  if (st != TK_OK) return fail(st);
  tk_model_info info;
  st = tk_model_get_info(model.handle, &info);
  if (st != TK_OK) return fail(st);

  tk_train_config tc;
  tk_train_config_default(&tc);
  tc.learning_rate = args.lr;
  tc.batch_size = args.batch;
  tc.epochs = args.epochs;
  tc.seed = args.seed;
  tc.use_sgd = args.optimizer == "sgd" ? 1 : 0;
  tc.eval_fraction = args.eval_fraction;
  tc.raster = derive_raster(info, args.history, args.raster_res);
  tc.data_path = args.data.c_str();
  tc.mask_path = args.mask.empty() ? nullptr : args.mask.c_str();
  tc.checkpoint_dir = args.out.c_str();
  const std::string log_path =
      args.log.empty() ? args.out + "/train.log" : args.log;
  tc.log_path = log_path.c_str();

  Report report;
  st = tk_train(model.handle, &tc, &report.handle);
  if (st != TK_OK) return fail(st);

  int64_t rows = 0;
  st = tk_train_report_size(report.handle, &rows);
  if (st != TK_OK) return fail(st);
  const std::string final_ckpt = tk_train_report_final_checkpoint(report.handle);
  if (args.json) {
    ordered_json j;
    if (searched) {
      ordered_json s;
      s["alpha"] = best.alpha;
      s["beta"] = best.beta;
      s["gamma"] = best.gamma;
      s["product"] = best.product;
      s["score"] = best.score;
      j["search"] = s;
    }
    ordered_json epochs = ordered_json::array();
    for (int64_t i = 0; i < rows; ++i) {
      tk_epoch_row row;
      st = tk_train_report_row(report.handle, i, &row);
      if (st != TK_OK) return fail(st);
      ordered_json r;
      r["epoch"] = row.epoch;
      r["train_loss"] = row.train_loss;
      r["eval_nll"] = row.eval_nll;
      r["eval_ade"] = row.eval_ade;
      r["eval_fde"] = row.eval_fde;
      epochs.push_back(r);
    }
    j["epochs"] = epochs;
    j["checkpoint"] = final_ckpt;
    std::printf("%s\n", j.dump().c_str());
  } else {
    for (int64_t i = 0; i < rows; ++i) {
      tk_epoch_row row;
      st = tk_train_report_row(report.handle, i, &row);
      if (st != TK_OK) return fail(st);
      std::printf("epoch %" PRId64 " train %.12e eval %.12e ade %.12e fde "
                  "%.12e\n",
                  row.epoch, row.train_loss, row.eval_nll, row.eval_ade,
                  row.eval_fde);
    }
    std::printf("checkpoint %s\n", final_ckpt.c_str());
  }
  return 0;
}

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string mask;
  int64_t batch = 16;
  int64_t history = -1;
  double raster_res = 0.5;
  bool json = false;
};

int run_eval(const EvalArgs& args) {
  Model model;
  if (const int rc = load_model(args.ckpt, &model)) return rc;
  Scenes scenes;
  if (const int rc = open_scenes(args.data, args.mask, &scenes)) return rc;
  tk_model_info info;
  tk_status st = tk_model_get_info(model.handle, &info);
  if (st != TK_OK) return fail(st);
  const tk_raster_config raster =
      derive_raster(info, args.history, args.raster_res);
  tk_eval_metrics metrics;
  st = tk_evaluate(model.handle, scenes.handle, &raster, args.batch, &metrics);
  if (st != TK_OK) return fail(st);
  if (args.json) {
    ordered_json j;
    j["nll"] = metrics.mean_nll;
    j["ade"] = metrics.mean_ade;
    j["fde"] = metrics.mean_fde;
    j["samples"] = metrics.samples;
    std::printf("%s\n", j.dump().c_str());
  } else {
    std::printf("nll %.12e ade %.12e fde %.12e samples %" PRId64 "\n",
                metrics.mean_nll, metrics.mean_ade, metrics.mean_fde,
                metrics.samples);
  }
  return 0;
}

struct PredictArgs {
  std::string ckpt;
  std::string data;
  std::string mask;
  std::string scene;
  int64_t frame = 0;
  std::string out;
  std::string plot;
  int64_t history = -1;
  double raster_res = 0.5;
  bool json = false;
};

// plot_only: --out is the vector-graphics file and no prediction is written.
int run_predict(const PredictArgs& args, bool plot_only) {
  Model model;
  if (const int rc = load_model(args.ckpt, &model)) return rc;
  Scenes scenes;
  if (const int rc = open_scenes(args.data, args.mask, &scenes)) return rc;
  tk_model_info info;
  tk_status st = tk_model_get_info(model.handle, &info);
  if (st != TK_OK) return fail(st);
  const tk_raster_config raster =
      derive_raster(info, args.history, args.raster_res);

  const char* prediction_path = plot_only ? nullptr : args.out.c_str();
  const char* plot_path = plot_only ? args.out.c_str()
                          : args.plot.empty() ? nullptr
                                              : args.plot.c_str();
  std::vector<double> confidences(static_cast<size_t>(info.num_modes), 0.0);
  st = tk_predict(model.handle, scenes.handle, args.scene.c_str(), args.frame,
                  &raster, prediction_path, plot_path, confidences.data());
  if (st != TK_OK) return fail(st);

  if (args.json) {
    ordered_json j;
    j["scene"] = args.scene;
    j["frame"] = args.frame;
    j["modes"] = info.num_modes;
    j["steps"] = info.num_steps;
    j["confidences"] = confidences;
    if (prediction_path != nullptr) j["prediction"] = prediction_path;
    if (plot_path != nullptr) j["plot"] = plot_path;
    std::printf("%s\n", j.dump().c_str());
  } else {
    std::printf("scene %s frame %" PRId64 " modes %" PRId64 " steps %" PRId64
                "\n",
                args.scene.c_str(), args.frame, info.num_modes,
                info.num_steps);
    for (int64_t k = 0; k < info.num_modes; ++k) {
      std::printf("confidence %" PRId64 " %.17g\n", k,
                  confidences[static_cast<size_t>(k)]);
    }
    if (prediction_path != nullptr) std::printf("wrote %s\n", prediction_path);
    if (plot_path != nullptr) std::printf("wrote %s\n", plot_path);
  }
  return 0;
}

struct SearchArgs {
  std::string data;
  std::string mask;
  std::string out;
  double grid_step = 0.05;
  double tol = 0.1;
  double lower = 1.0;
  double upper = 2.0;
  uint64_t seed = 0;
  bool json = false;
};

int run_search(const SearchArgs& args) {
  Scenes scenes;
  if (const int rc = open_scenes(args.data, args.mask, &scenes)) return rc;
  tk_search_options options;
  tk_search_options_default(&options);
  options.lower = args.lower;
  options.upper = args.upper;
  options.grid_step = args.grid_step;
  options.tol = args.tol;
  options.seed = args.seed;
  tk_search_best best;
  const tk_status st = tk_scale_search(
      scenes.handle, &options, args.out.empty() ? nullptr : args.out.c_str(),
      &best);
  if (st != TK_OK) return fail(st);
  if (args.json) {
    ordered_json j;
    j["rows"] = best.rows;
    j["feasible"] = best.feasible;
    j["alpha"] = best.alpha;
    j["beta"] = best.beta;
    j["gamma"] = best.gamma;
    j["product"] = best.product;
    j["score"] = best.score;
    if (!args.out.empty()) j["report"] = args.out;
    std::printf("%s\n", j.dump().c_str());
  } else {
    std::printf("grid %" PRId64 " feasible %" PRId64 "\n", best.rows,
                best.feasible);
    std::printf("best alpha %.6g beta %.6g gamma %.6g product %.6g score "
                "%.17g\n",
                best.alpha, best.beta, best.gamma, best.product, best.score);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vehicle trajectory prediction toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* gen_cmd =
      app.add_subcommand("gen", "generate a synthetic scene corpus");
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_option("--scenes", gen.scenes, "number of scenes");
  gen_cmd->add_option("--frames", gen.frames, "frames per scene");
  gen_cmd->add_option("--motion", gen.motion,
                      "constant_velocity, constant_turn, or lane_change");
  gen_cmd->add_option("--out", gen.out, "scene file to write")->required();
  CLI::Option* gen_mask =
      gen_cmd->add_option("--mask", gen.mask, "agent mask file to write");
  gen_cmd->add_option("--mask-fraction", gen.mask_fraction,
                      "fraction of tracks marked unusable")
      ->needs(gen_mask);
  gen_cmd->add_flag("--json", gen.json, "machine-readable output");

  InspectArgs inspect;
  CLI::App* inspect_cmd =
      app.add_subcommand("inspect", "report corpus or checkpoint statistics");
  CLI::Option* inspect_data =
      inspect_cmd->add_option("--data", inspect.data, "scene file");
  inspect_cmd->add_option("--mask", inspect.mask, "agent mask file")
      ->needs(inspect_data);
  CLI::Option* inspect_ckpt =
      inspect_cmd->add_option("--ckpt", inspect.ckpt, "checkpoint file");
  inspect_data->excludes(inspect_ckpt);
  inspect_cmd->add_option("--raster-px", inspect.raster_px,
                          "raster size for the sample count");
  inspect_cmd->add_option("--raster-res", inspect.raster_res,
                          "meters per pixel");
  inspect_cmd->add_option("--history", inspect.history, "history frames");
  inspect_cmd->add_option("--future", inspect.future, "future frames");
  inspect_cmd->add_flag("--json", inspect.json, "machine-readable output");

  TrainArgs train;
  CLI::App* train_cmd =
      app.add_subcommand("train", "train a model on a scene corpus");
  train_cmd->add_option("--data", train.data, "scene file")->required();
  train_cmd->add_option("--mask", train.mask, "agent mask file");
  train_cmd->add_option("--out", train.out, "checkpoint directory")
      ->required();
  train_cmd->add_option("--log", train.log,
                        "step log file (default <out>/train.log)");
  train_cmd->add_option("--lr", train.lr, "learning rate");
  train_cmd->add_option("--batch", train.batch, "batch size");
  train_cmd
      ->add_option("--optimizer", train.optimizer, "radam or sgd")
      ->check(CLI::IsMember({"radam", "sgd"}));
  train_cmd->add_option("--epochs", train.epochs, "training epochs");
  train_cmd->add_option("--seed", train.seed, "run seed");
  train_cmd->add_option("--eval-fraction", train.eval_fraction,
                        "held-out scene fraction");
  train_cmd->add_option("--layers", train.layers, "base layers per stage")
      ->delimiter(',');
  train_cmd
      ->add_option("--channels", train.channels, "base channels per stage")
      ->delimiter(',');
  train_cmd->add_option("--resolution", train.resolution,
                        "base input resolution");
  train_cmd->add_option("--modes", train.modes, "trajectory hypotheses");
  train_cmd->add_option("--steps", train.steps, "future steps per hypothesis");
  train_cmd->add_option("--history", train.history, "history frames");
  train_cmd->add_option("--raster-res", train.raster_res, "meters per pixel");
  CLI::Option* train_alpha =
      train_cmd->add_option("--alpha", train.alpha, "depth multiplier base");
  CLI::Option* train_beta =
      train_cmd->add_option("--beta", train.beta, "width multiplier base");
  CLI::Option* train_gamma = train_cmd->add_option(
      "--gamma", train.gamma, "resolution multiplier base");
  train_cmd->add_option("--phi", train.phi, "compound coefficient");
  train_cmd->add_option("--tol", train.tol, "constraint tolerance");
  CLI::Option* train_search = train_cmd->add_flag(
      "--search", train.search, "pick alpha/beta/gamma by grid search");
  train_search->excludes(train_alpha)
      ->excludes(train_beta)
      ->excludes(train_gamma);
  train_cmd->add_option("--grid-step", train.grid_step,
                        "search grid step (with --search)");
  train_cmd->add_option("--lower", train.lower,
                        "search grid lower bound (with --search)");
  train_cmd->add_option("--upper", train.upper,
                        "search grid upper bound (with --search)");
  train_cmd->add_flag("--json", train.json, "machine-readable output");

  EvalArgs eval;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint on a scene corpus");
  eval_cmd->add_option("--ckpt", eval.ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval.data, "scene file")->required();
  eval_cmd->add_option("--mask", eval.mask, "agent mask file");
  eval_cmd->add_option("--batch", eval.batch, "batch size");
  eval_cmd->add_option("--history", eval.history,
                       "history frames (default from checkpoint)");
  eval_cmd->add_option("--raster-res", eval.raster_res, "meters per pixel");
  eval_cmd->add_flag("--json", eval.json, "machine-readable output");

  PredictArgs predict;
  CLI::App* predict_cmd = app.add_subcommand(
      "predict", "write trajectory hypotheses for one scene frame");
  predict_cmd->add_option("--ckpt", predict.ckpt, "checkpoint file")
      ->required();
  predict_cmd->add_option("--data", predict.data, "scene file")->required();
  predict_cmd->add_option("--mask", predict.mask, "agent mask file");
  predict_cmd->add_option("--scene", predict.scene, "scene id")->required();
  predict_cmd->add_option("--frame", predict.frame, "anchor frame index")
      ->required();
  predict_cmd->add_option("--out", predict.out, "prediction file to write")
      ->required();
  predict_cmd->add_option("--plot", predict.plot,
                          "also write a vector-graphics plot");
  predict_cmd->add_option("--history", predict.history,
                          "history frames (default from checkpoint)");
  predict_cmd->add_option("--raster-res", predict.raster_res,
                          "meters per pixel");
  predict_cmd->add_flag("--json", predict.json, "machine-readable output");

  PredictArgs plot;
  CLI::App* plot_cmd = app.add_subcommand(
      "plot", "render predictions over ground truth for one scene frame");
  plot_cmd->add_option("--ckpt", plot.ckpt, "checkpoint file")->required();
  plot_cmd->add_option("--data", plot.data, "scene file")->required();
  plot_cmd->add_option("--mask", plot.mask, "agent mask file");
  plot_cmd->add_option("--scene", plot.scene, "scene id")->required();
  plot_cmd->add_option("--frame", plot.frame, "anchor frame index")
      ->required();
  plot_cmd->add_option("--out", plot.out, "vector-graphics file to write")
      ->required();
  plot_cmd->add_option("--history", plot.history,
                       "history frames (default from checkpoint)");
  plot_cmd->add_option("--raster-res", plot.raster_res, "meters per pixel");
  plot_cmd->add_flag("--json", plot.json, "machine-readable output");

  SearchArgs search;
  CLI::App* search_cmd = app.add_subcommand(
      "scale-search", "grid-search scaling coefficients on a corpus");
  search_cmd->add_option("--data", search.data, "scene file")->required();
  search_cmd->add_option("--mask", search.mask, "agent mask file");
  search_cmd->add_option("--out", search.out, "per-point report file");
  search_cmd->add_option("--grid-step", search.grid_step, "grid step");
  search_cmd->add_option("--tol", search.tol, "constraint tolerance");
  search_cmd->add_option("--lower", search.lower, "grid lower bound");
  search_cmd->add_option("--upper", search.upper, "grid upper bound");
  search_cmd->add_option("--seed", search.seed, "probe seed");
  search_cmd->add_flag("--json", search.json, "machine-readable output");

  CLI11_PARSE(app, argc, argv);

  if (gen_cmd->parsed()) return run_gen(gen);
  if (inspect_cmd->parsed()) {
    if (inspect.data.empty() == inspect.ckpt.empty()) {
      std::fprintf(stderr, "error: inspect needs exactly one of --data or "
                           "--ckpt\n");
      return 1;
    }
    return run_inspect(inspect);
  }
  if (train_cmd->parsed()) return run_train(train);
  if (eval_cmd->parsed()) return run_eval(eval);
  if (predict_cmd->parsed()) return run_predict(predict, false);
  if (plot_cmd->parsed()) return run_predict(plot, true);
  if (search_cmd->parsed()) return run_search(search);
  return 1;
}
