#include "trajkit/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "trajkit/error.hpp"
#include "trajkit/loss.hpp"
#include "trajkit/model.hpp"

using namespace trajkit;

namespace {

const ScalingCoefficients kUnitPhi{1.2, 1.1, 1.15, 0.0};

BaseArchitecture tiny_base() {
  BaseArchitecture base;
  base.stage_layers = {1, 1};
  base.stage_channels = {8, 8};
  base.input_resolution = 32;
  return base;
}

HybridModel tiny_model(std::uint64_t seed) {
  return build(tiny_base(), kUnitPhi, 2, 3, seed, 5);
}

// 32 px, 1 history frame, 3 future steps: 5 raster channels.
RasterConfig tiny_raster() {
  RasterConfig raster;
  raster.size_px = 32;
  raster.history_frames = 1;
  raster.future_frames = 3;
  return raster;
}

Scene line_scene(const std::string& id, std::int64_t frames, double speed) {
  Scene scene;
  scene.id = id;
  for (std::int64_t i = 0; i < frames; ++i) {
    Frame frame;
    frame.timestamp = 0.1 * static_cast<double>(i);
    frame.ego = {speed * 0.1 * static_cast<double>(i), 0.0, 0.0};
    AgentState agent;
    agent.track_id = "t0";
    agent.x = frame.ego.x + 6.0;
    agent.y = 2.0;
    agent.length = 4.0;
    agent.width = 2.0;
    frame.agents.push_back(agent);
    frame.lights.push_back({8.0, -2.0, LightState::red});
    scene.frames.push_back(frame);
  }
  return scene;
}

std::string temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

TrainConfig tiny_cfg(const std::string& dir) {
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 16;
  cfg.epochs = 1;
  cfg.seed = 5;
  cfg.eval_fraction = 0.34;
  cfg.raster = tiny_raster();
  cfg.data_path = dir + "/scenes.jsonl";
  cfg.checkpoint_dir = dir;
  cfg.log_path = dir + "/train.log";
  return cfg;
}

bool same_params(const HybridModel& a, const HybridModel& b) {
  const auto na = named_parameters(a);
  const auto nb = named_parameters(b);
  if (na.size() != nb.size()) {
    return false;
  }
  for (std::size_t i = 0; i < na.size(); ++i) {
    const auto da = na[i].second.data();
    const auto db = nb[i].second.data();
    if (na[i].first != nb[i].first || da.size() != db.size() ||
        std::memcmp(da.data(), db.data(), da.size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("split: 10 scenes at 0.2 give 8 train and 2 eval") {
  const auto scenes =
      generate_synthetic(1, 10, 6, MotionProfile::constant_velocity);
  const auto [train_scenes, eval_scenes] = split(scenes, 0.2, 42);
  CHECK(train_scenes.size() == 8);
  CHECK(eval_scenes.size() == 2);

  std::set<std::string> ids;
  for (const Scene& s : scenes) {
    ids.insert(s.id);
  }
  std::set<std::string> seen;
  for (const Scene& s : train_scenes) {
    CHECK(seen.insert(s.id).second);
  }
  for (const Scene& s : eval_scenes) {
    CHECK(seen.insert(s.id).second);
  }
  CHECK(seen == ids);
}

TEST_CASE("split: deterministic for a fixed seed") {
  const auto scenes =
      generate_synthetic(2, 7, 6, MotionProfile::constant_turn);
  const auto [t1, e1] = split(scenes, 0.3, 9);
  const auto [t2, e2] = split(scenes, 0.3, 9);
  REQUIRE(t1.size() == t2.size());
  REQUIRE(e1.size() == e2.size());
  for (std::size_t i = 0; i < t1.size(); ++i) {
    CHECK(t1[i].id == t2[i].id);
  }
  for (std::size_t i = 0; i < e1.size(); ++i) {
    CHECK(e1[i].id == e2[i].id);
  }
  // Both sides stay non-empty even when rounding would empty one.
  const auto [t3, e3] = split(scenes, 0.01, 9);
  CHECK(e3.size() == 1);
  CHECK(t3.size() == 6);
}

TEST_CASE("split: fewer than 2 scenes is an error") {
  std::vector<Scene> one{line_scene("a", 6, 1.0)};
  CHECK_THROWS_AS(split(one, 0.5, 1), Error);
  CHECK_THROWS_AS(split({}, 0.5, 1), Error);
  std::vector<Scene> two{line_scene("a", 6, 1.0), line_scene("b", 6, 1.0)};
  CHECK_THROWS_AS(split(two, 0.0, 1), Error);
  CHECK_THROWS_AS(split(two, 1.0, 1), Error);
}

TEST_CASE("config validation rejects bad fields") {
  TrainConfig cfg = tiny_cfg("/tmp");
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = tiny_cfg("/tmp");
  cfg.batch_size = 0;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = tiny_cfg("/tmp");
  cfg.epochs = -1;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = tiny_cfg("/tmp");
  cfg.eval_fraction = 1.0;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = tiny_cfg("/tmp");
  cfg.data_path.clear();
  CHECK_THROWS_AS(validate(cfg), Error);
}

TEST_CASE("evaluate: zero-head model on stationary scenes scores exactly zero") {
  HybridModel model = tiny_model(3);
  for (double& w : model.head_weight.mutable_data()) {
    w = 0.0;
  }
  for (double& b : model.head_bias.mutable_data()) {
    b = 0.0;
  }
  std::vector<Scene> scenes{line_scene("s0", 8, 0.0), line_scene("s1", 8, 0.0)};
  TrainConfig cfg = tiny_cfg("/tmp");

  const EvalMetrics m = evaluate(model, scenes, cfg);
  CHECK(m.samples == 8);
  CHECK(m.mean_nll == 0.0);
  CHECK(m.mean_ade == 0.0);
  CHECK(m.mean_fde == 0.0);
}

TEST_CASE("evaluate: pure and repeatable") {
  const std::string dir = temp_dir("trajkit_eval_pure");
  HybridModel model = tiny_model(17);
  const auto scenes =
      generate_synthetic(4, 3, 8, MotionProfile::constant_velocity);
  TrainConfig cfg = tiny_cfg(dir);

  const std::string before = dir + "/before.ckpt";
  const std::string after = dir + "/after.ckpt";
  save_checkpoint(model, nullptr, before);
  const EvalMetrics m1 = evaluate(model, scenes, cfg);
  const EvalMetrics m2 = evaluate(model, scenes, cfg);
  save_checkpoint(model, nullptr, after);

  CHECK(m1.mean_nll == m2.mean_nll);
  CHECK(m1.mean_ade == m2.mean_ade);
  CHECK(m1.mean_fde == m2.mean_fde);
  CHECK(read_file(before) == read_file(after));

  // Round-tripping the model through a checkpoint preserves the metrics
  // bit-exactly.
  save_checkpoint(model, nullptr, before);
  const EvalMetrics m3 = evaluate(load_checkpoint(before).model, scenes, cfg);
  CHECK(m3.mean_nll == m1.mean_nll);
  CHECK(m3.mean_ade == m1.mean_ade);
  CHECK(m3.mean_fde == m1.mean_fde);

  std::filesystem::remove_all(dir);
}

TEST_CASE("evaluate: mean nll matches the scalar oracle") {
  HybridModel model = tiny_model(23);
  const auto scenes =
      generate_synthetic(6, 3, 8, MotionProfile::lane_change);
  TrainConfig cfg = tiny_cfg("/tmp");
  cfg.batch_size = 4;

  const EvalMetrics m = evaluate(model, scenes, cfg);

  double nll_sum = 0.0;
  double ade_sum = 0.0;
  double fde_sum = 0.0;
  std::int64_t n = 0;
  for (const Scene& scene : scenes) {
    for (std::int64_t frame : sample_frames(scene, cfg.raster)) {
      const Sample sample = rasterize(scene, frame, cfg.raster, {});
      const TrajectoryPrediction pred = forward(model, sample.raster);
      const std::vector<double> hyp(pred.hypotheses.data().begin(),
                                    pred.hypotheses.data().end());
      const std::vector<double> logits(pred.confidence_logits.data().begin(),
                                       pred.confidence_logits.data().end());
      nll_sum += oracles::nll_reference(hyp, logits, sample.target,
                                        sample.availability, 2, 3);
      ade_sum += oracles::ade_reference(hyp, logits, sample.target,
                                        sample.availability, 2, 3);
      fde_sum += oracles::fde_reference(hyp, logits, sample.target,
                                        sample.availability, 2, 3);
      ++n;
    }
  }
  REQUIRE(n == m.samples);
  CHECK(std::abs(m.mean_nll - nll_sum / static_cast<double>(n)) <= 1e-10);
  CHECK(std::abs(m.mean_ade - ade_sum / static_cast<double>(n)) <= 1e-10);
  CHECK(std::abs(m.mean_fde - fde_sum / static_cast<double>(n)) <= 1e-10);
}

TEST_CASE("evaluate: zero samples or incompatible raster is an error") {
  HybridModel model = tiny_model(1);
  TrainConfig cfg = tiny_cfg("/tmp");
  std::vector<Scene> thin{line_scene("a", 4, 1.0)};  // too short to sample
  CHECK_THROWS_AS(evaluate(model, thin, cfg), Error);
  CHECK_THROWS_AS(evaluate(model, {}, cfg), Error);

  TrainConfig bad = cfg;
  bad.raster.future_frames = 4;
  std::vector<Scene> ok{line_scene("a", 10, 1.0)};
  CHECK_THROWS_AS(evaluate(model, ok, bad), Error);
  bad = cfg;
  bad.raster.size_px = 64;
  CHECK_THROWS_AS(evaluate(model, ok, bad), Error);
  bad = cfg;
  bad.raster.history_frames = 2;
  CHECK_THROWS_AS(evaluate(model, ok, bad), Error);
}

TEST_CASE("train: zero epochs leaves only the initial checkpoint") {
  const std::string dir = temp_dir("trajkit_train_zero");
  std::vector<Scene> scenes{line_scene("a", 8, 1.0), line_scene("b", 8, 1.0),
                            line_scene("c", 8, 1.0)};
  write_scenes(scenes, dir + "/scenes.jsonl");

  TrainConfig cfg = tiny_cfg(dir);
  cfg.epochs = 0;
  HybridModel model = tiny_model(2);
  HybridModel untouched = tiny_model(2);

  const TrainReport report = train(cfg, model);
  CHECK(report.rows.empty());
  CHECK(report.final_checkpoint == dir + "/init.ckpt");
  CHECK(std::filesystem::exists(dir + "/init.ckpt"));
  CHECK(!std::filesystem::exists(dir + "/epoch-0001.ckpt"));
  CHECK(std::filesystem::exists(dir + "/report.txt"));
  CHECK(read_file(dir + "/report.csv") ==
        "epoch,train_loss,eval_nll,eval_ade,eval_fde\n");
  CHECK(same_params(model, untouched));

  std::filesystem::remove_all(dir);
}

TEST_CASE("train: one epoch on one batch equals a manual optimizer step") {
  // Identical scene content under distinct ids makes the result independent
  // of which scene the split holds out and of the within-batch order.
  const std::string dir = temp_dir("trajkit_train_replay");
  std::vector<Scene> scenes{line_scene("a", 5, 1.0), line_scene("b", 5, 1.0),
                            line_scene("c", 5, 1.0)};
  write_scenes(scenes, dir + "/scenes.jsonl");

  TrainConfig cfg = tiny_cfg(dir);
  HybridModel model = tiny_model(41);
  const TrainReport report = train(cfg, model);
  REQUIRE(report.rows.size() == 1);

  // Manual replay: two copies of the single admissible sample, one RAdam step.
  HybridModel replay = tiny_model(41);
  const Sample sample = rasterize(scenes[0], 1, cfg.raster, {});
  Tensor rasters = stack_rasters({sample.raster, sample.raster});
  std::vector<GroundTruth> gts(2, {sample.target, sample.availability});

  std::vector<Tensor> params = parameters(replay);
  RAdamConfig oc;
  oc.lr = cfg.learning_rate;
  RAdam opt(params, oc);
  Tensor loss = batch_nll(forward_batch(replay, rasters), gts);
  backward(loss);
  opt.step();

  CHECK(report.rows[0].train_loss == loss.item());
  CHECK(same_params(model, replay));

  SUBCASE("sgd variant") {
    HybridModel sgd_model = tiny_model(43);
    TrainConfig sgd_cfg = cfg;
    sgd_cfg.checkpoint_dir = dir + "/sgd";
    sgd_cfg.log_path.clear();
    sgd_cfg.optimizer = OptimizerKind::sgd;
    train(sgd_cfg, sgd_model);

    HybridModel sgd_replay = tiny_model(43);
    std::vector<Tensor> sgd_params = parameters(sgd_replay);
    backward(batch_nll(forward_batch(sgd_replay, rasters), gts));
    sgd_step(sgd_params, sgd_cfg.learning_rate);
    CHECK(same_params(sgd_model, sgd_replay));
  }

  std::filesystem::remove_all(dir);
}

TEST_CASE("train: fixed seed gives identical runs") {
  const std::string dir1 = temp_dir("trajkit_train_det1");
  const std::string dir2 = temp_dir("trajkit_train_det2");
  const auto scenes =
      generate_synthetic(11, 5, 10, MotionProfile::constant_velocity);
  write_scenes(scenes, dir1 + "/scenes.jsonl");
  write_scenes(scenes, dir2 + "/scenes.jsonl");

  TrainConfig cfg1 = tiny_cfg(dir1);
  cfg1.epochs = 2;
  cfg1.batch_size = 4;
  TrainConfig cfg2 = tiny_cfg(dir2);
  cfg2.epochs = 2;
  cfg2.batch_size = 4;

  HybridModel m1 = tiny_model(6);
  HybridModel m2 = tiny_model(6);
  const TrainReport r1 = train(cfg1, m1);
  const TrainReport r2 = train(cfg2, m2);

  REQUIRE(r1.rows.size() == r2.rows.size());
  for (std::size_t i = 0; i < r1.rows.size(); ++i) {
    CHECK(r1.rows[i].train_loss == r2.rows[i].train_loss);
    CHECK(r1.rows[i].eval_nll == r2.rows[i].eval_nll);
    CHECK(r1.rows[i].eval_ade == r2.rows[i].eval_ade);
    CHECK(r1.rows[i].eval_fde == r2.rows[i].eval_fde);
  }
  CHECK(read_file(dir1 + "/train.log") == read_file(dir2 + "/train.log"));
  CHECK(read_file(dir1 + "/report.csv") == read_file(dir2 + "/report.csv"));
  CHECK(read_file(dir1 + "/epoch-0002.ckpt") ==
        read_file(dir2 + "/epoch-0002.ckpt"));
  CHECK(same_params(m1, m2));

  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("train: non-finite loss aborts and persists the batch index") {
  const std::string dir = temp_dir("trajkit_train_nan");
  std::vector<Scene> scenes{line_scene("a", 8, 1.0), line_scene("b", 8, 1.0),
                            line_scene("c", 8, 1.0)};
  write_scenes(scenes, dir + "/scenes.jsonl");

  TrainConfig cfg = tiny_cfg(dir);
  HybridModel model = tiny_model(4);
  model.head_bias.mutable_data()[0] = std::nan("");

  bool threw = false;
  try {
    train(cfg, model);
  } catch (const Error& e) {
    threw = true;
    CHECK(e.kind() == ErrorKind::numeric);
    CHECK(std::string(e.what()).find("persisted") != std::string::npos);
  }
  CHECK(threw);
  CHECK(read_file(dir + "/nan-abort.txt") == "epoch 1 step 1 batch 0\n");

  std::filesystem::remove_all(dir);
}

TEST_CASE("train: loss falls over a 60-step smoke run") {
  const std::string dir = temp_dir("trajkit_train_smoke");
  const auto scenes =
      generate_synthetic(13, 6, 16, MotionProfile::constant_velocity);
  write_scenes(scenes, dir + "/scenes.jsonl");

  TrainConfig cfg = tiny_cfg(dir);
  cfg.epochs = 4;
  cfg.batch_size = 4;
  cfg.eval_fraction = 0.2;
  HybridModel model = tiny_model(10);

  const TrainReport report = train(cfg, model);
  REQUIRE(report.rows.size() == 4);
  CHECK(report.rows.back().train_loss < report.rows.front().train_loss);
  CHECK(report.final_checkpoint == dir + "/epoch-0004.ckpt");
  for (const EpochRow& row : report.rows) {
    CHECK(row.wall_seconds >= 0.0);
    CHECK(std::isfinite(row.train_loss));
  }

  // Log lines follow the fixed format and the table renders one row per epoch.
  const std::string log = read_file(dir + "/train.log");
  CHECK(log.find("epoch 1 step 1 loss ") != std::string::npos);
  CHECK(log.find("epoch 4 train ") != std::string::npos);
  const std::string table = train_report_table(report);
  CHECK(std::count(table.begin(), table.end(), '\n') ==
        static_cast<std::ptrdiff_t>(report.rows.size()) + 2);

  std::filesystem::remove_all(dir);
}

TEST_CASE("probe score is finite, deterministic, and drives grid search") {
  BaseArchitecture probe_base;
  probe_base.stage_layers = {1, 1};
  probe_base.stage_channels = {8, 8};
  probe_base.input_resolution = 32;

  const auto scenes =
      generate_synthetic(19, 4, 8, MotionProfile::constant_velocity);
  ProbeOptions opt;

  const ScalingCoefficients corner{2.0, 1.0, 1.0, 1.0};
  const BaseArchitecture scaled =
      apply_scaling(probe_base, derive_multipliers(corner));
  const double s1 = probe_score(scaled, corner, scenes, opt);
  const double s2 = probe_score(scaled, corner, scenes, opt);
  CHECK(std::isfinite(s1));
  CHECK(s1 == s2);

  // Corner grid: (2, 1, 1) is the only feasible triple of the 8.
  GridSearchOptions grid;
  grid.grid_step = 1.0;
  const GridSearchResult result = grid_search(
      probe_base,
      [&](const BaseArchitecture& arch, const ScalingCoefficients& coeffs) {
        return probe_score(arch, coeffs, scenes, opt);
      },
      grid);
  CHECK(result.best.alpha == 2.0);
  CHECK(result.best.beta == 1.0);
  CHECK(result.best.gamma == 1.0);
  CHECK(result.report.size() == 8);
  std::int64_t feasible = 0;
  for (const GridPoint& p : result.report) {
    feasible += p.feasible ? 1 : 0;
  }
  CHECK(feasible == 1);
}

TEST_CASE("train: a corpus with no admissible frames is an error") {
  const std::string dir = temp_dir("trajkit_train_thin");
  std::vector<Scene> scenes{line_scene("a", 4, 1.0), line_scene("b", 4, 1.0)};
  write_scenes(scenes, dir + "/scenes.jsonl");
  TrainConfig cfg = tiny_cfg(dir);
  HybridModel model = tiny_model(1);
  CHECK_THROWS_AS(train(cfg, model), Error);
  std::filesystem::remove_all(dir);
}
