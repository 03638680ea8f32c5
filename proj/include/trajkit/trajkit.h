#ifndef TRAJKIT_TRAJKIT_H
#define TRAJKIT_TRAJKIT_H

/* C interface to the trajectory-prediction toolkit.  Every call returns a
 * tk_status; on failure tk_last_error() describes what went wrong for the
 * calling thread.  Out-parameters are written only on TK_OK.  Objects
 * returned through tk_*_free-able handles are owned by the caller. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tk_status {
  TK_OK = 0,
  TK_ERR_INVALID = 1,    /* bad arguments, shapes, or configuration */
  TK_ERR_IO = 2,         /* unreadable, unwritable, or malformed files */
  TK_ERR_NUMERIC = 3,    /* non-finite values where finite ones are required */
  TK_ERR_CONSTRAINT = 4, /* scaling-constraint or search failure */
  TK_ERR_NOT_FOUND = 5   /* missing scene, frame, or named entity */
} tk_status;

/* Message for the most recent failure on this thread; never NULL. */
const char* tk_last_error(void);

/* ------------------------------------------------------------------ */
/* Scene corpora                                                       */

typedef struct tk_scenes tk_scenes;

typedef struct tk_raster_config {
  int64_t size_px;        /* <= 0: 64 */
  double resolution;      /* meters per pixel; <= 0: 0.5 */
  int64_t history_frames; /* < 0: 4 */
  int64_t future_frames;  /* <= 0: 16 */
  double ego_center_x;    /* <= 0: 0.25 */
  double ego_center_y;    /* <= 0: 0.5 */
} tk_raster_config;

void tk_raster_config_default(tk_raster_config* cfg);

/* motion is one of "constant_velocity", "constant_turn", "lane_change". */
tk_status tk_scenes_generate(uint64_t seed, int64_t num_scenes,
                             int64_t frames_per_scene, const char* motion,
                             tk_scenes** out);

/* mask_path may be NULL (every track usable). */
tk_status tk_scenes_open(const char* scenes_path, const char* mask_path,
                         tk_scenes** out);

/* Marks roughly unusable_fraction of agent tracks unusable. */
tk_status tk_scenes_add_mask(tk_scenes* scenes, uint64_t seed,
                             double unusable_fraction);

/* mask_path may be NULL to skip writing the mask. */
tk_status tk_scenes_save(const tk_scenes* scenes, const char* scenes_path,
                         const char* mask_path);

tk_status tk_scenes_stats(const tk_scenes* scenes, int64_t* num_scenes,
                          int64_t* num_frames, int64_t* num_tracks,
                          int64_t* num_masked);

/* Rasterizable (scene, frame) pairs under cfg. */
tk_status tk_scenes_sample_count(const tk_scenes* scenes,
                                 const tk_raster_config* cfg, int64_t* out);

void tk_scenes_free(tk_scenes* scenes);

/* ------------------------------------------------------------------ */
/* Models                                                              */

typedef struct tk_model tk_model;

typedef struct tk_model_config {
  /* Base architecture; num_stages 0 selects the default
   * [2,2,2,2] layers / [16,32,64,128] channels. */
  const int64_t* stage_layers;
  const int64_t* stage_channels;
  size_t num_stages;
  int64_t input_resolution; /* <= 0: 64 */
  int64_t num_modes;        /* <= 0: 3 */
  int64_t num_steps;        /* <= 0: 16 */
  int64_t in_channels;      /* <= 0: 2 * history + 3 for the default raster */
  /* Compound-scaling coefficients; alpha, beta, gamma <= 0 select
   * (1.2, 1.1, 1.15).  phi is taken as-is and must be >= 0. */
  double alpha;
  double beta;
  double gamma;
  double phi;
  double constraint_tol; /* <= 0: 0.1 */
  uint64_t seed;
} tk_model_config;

void tk_model_config_default(tk_model_config* cfg);

tk_status tk_model_build(const tk_model_config* cfg, tk_model** out);
tk_status tk_model_load(const char* path, tk_model** out);
tk_status tk_model_save(const tk_model* model, const char* path);

typedef struct tk_model_info {
  int64_t num_stages;
  int64_t input_resolution; /* after scaling */
  int64_t in_channels;
  int64_t num_modes;
  int64_t num_steps;
  int64_t parameter_count;
  double flops_proxy;
  double alpha;
  double beta;
  double gamma;
  double phi;
} tk_model_info;

tk_status tk_model_get_info(const tk_model* model, tk_model_info* out);

/* Scaled layer/channel counts for stage `index` in [0, num_stages). */
tk_status tk_model_stage(const tk_model* model, int64_t index, int64_t* layers,
                         int64_t* channels);

void tk_model_free(tk_model* model);

/* ------------------------------------------------------------------ */
/* Training and evaluation                                             */

typedef struct tk_train_config {
  double learning_rate; /* <= 0: 1e-5 */
  int64_t batch_size;   /* <= 0: 16 */
  int64_t epochs;       /* < 0 rejected */
  uint64_t seed;
  int use_sgd;          /* 0: rectified-Adam (default), nonzero: plain SGD */
  double eval_fraction; /* <= 0: 0.2 */
  tk_raster_config raster;
  const char* data_path;
  const char* mask_path;      /* NULL: every track usable */
  const char* checkpoint_dir; /* receives init/epoch checkpoints + reports */
  const char* log_path;       /* NULL: no log file */
} tk_train_config;

void tk_train_config_default(tk_train_config* cfg);

typedef struct tk_train_report tk_train_report;

typedef struct tk_epoch_row {
  int64_t epoch; /* 1-based */
  double train_loss;
  double eval_nll;
  double eval_ade;
  double eval_fde;
  double wall_seconds;
} tk_epoch_row;

tk_status tk_train(tk_model* model, const tk_train_config* cfg,
                   tk_train_report** out);

tk_status tk_train_report_size(const tk_train_report* report, int64_t* rows);
tk_status tk_train_report_row(const tk_train_report* report, int64_t index,
                              tk_epoch_row* out);
/* Valid until the report is freed. */
const char* tk_train_report_final_checkpoint(const tk_train_report* report);
void tk_train_report_free(tk_train_report* report);

typedef struct tk_eval_metrics {
  double mean_nll;
  double mean_ade;
  double mean_fde;
  int64_t samples;
} tk_eval_metrics;

tk_status tk_evaluate(const tk_model* model, const tk_scenes* scenes,
                      const tk_raster_config* raster, int64_t batch_size,
                      tk_eval_metrics* out);

/* ------------------------------------------------------------------ */
/* Prediction and plotting                                             */

/* Runs the model on (scene_id, frame).  prediction_path and plot_path may
 * each be NULL to skip that output.  confidences_out, if non-NULL, receives
 * the model's num_modes softmaxed confidences. */
tk_status tk_predict(const tk_model* model, const tk_scenes* scenes,
                     const char* scene_id, int64_t frame,
                     const tk_raster_config* raster,
                     const char* prediction_path, const char* plot_path,
                     double* confidences_out);

/* ------------------------------------------------------------------ */
/* Compound-scaling grid search                                        */

typedef struct tk_search_options {
  double lower;     /* <= 0: 1.0 */
  double upper;     /* <= 0: 2.0 */
  double grid_step; /* <= 0: 0.05 */
  double tol;       /* <= 0: 0.1 */
  uint64_t seed;
} tk_search_options;

void tk_search_options_default(tk_search_options* options);

typedef struct tk_search_best {
  double alpha;
  double beta;
  double gamma;
  double product;
  double score;
  int64_t rows;     /* grid cardinality */
  int64_t feasible; /* points satisfying the constraint */
} tk_search_best;

/* Scores each feasible triple with a short training probe on `scenes`.
 * report_csv_path may be NULL to skip the per-point report. */
tk_status tk_scale_search(const tk_scenes* scenes,
                          const tk_search_options* options,
                          const char* report_csv_path, tk_search_best* out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* TRAJKIT_TRAJKIT_H */
