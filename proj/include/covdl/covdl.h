#ifndef COVDL_COVDL_H
#define COVDL_COVDL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(COVDL_BUILDING_LIBRARY)
#    define COVDL_API __declspec(dllexport)
#  else
#    define COVDL_API __declspec(dllimport)
#  endif
#else
#  define COVDL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum covdl_status {
  COVDL_OK = 0,
  COVDL_E_INVALID_ARGUMENT = 1,
  COVDL_E_DIMENSION = 2,
  COVDL_E_EMPTY_PLAN = 3,
  COVDL_E_RANK_DEFICIENT = 4,
  COVDL_E_NUMERICAL = 5,
  COVDL_E_IO = 6,
  COVDL_E_BUFFER_TOO_SMALL = 7,
  COVDL_E_NO_MEMORY = 8,
  COVDL_E_INTERNAL = 99
} covdl_status;

typedef enum covdl_mode {
  COVDL_MODE_AUTO = -1,
  COVDL_MODE_COVDL1 = 0,
  COVDL_MODE_COVDL2 = 1
} covdl_mode;

typedef enum covdl_update_rule {
  COVDL_UPDATE_MOD = 0,
  COVDL_UPDATE_KSVD = 1
} covdl_update_rule;

typedef struct covdl_matrix covdl_matrix;
typedef struct covdl_truth covdl_truth;
typedef struct covdl_dataset covdl_dataset;
typedef struct covdl_result covdl_result;
typedef struct covdl_report covdl_report;

typedef struct covdl_scenario {
  int64_t channels;
  int64_t sources;
  int64_t active;
  double duration_seconds;
  double sample_rate;
  double segment_seconds;
  double power_low;
  double power_high;
  int32_t ar_order;
  double coherence_cap;
  double noise_level;
  uint64_t seed;
} covdl_scenario;

typedef struct covdl_segmentation {
  double segment_seconds;
  double overlap_ratio;
  int32_t center;     /* subtract the per-segment mean */
  int32_t frobenius;  /* sqrt(2)-weighted off-diagonals */
} covdl_segmentation;

typedef struct covdl_learn_options {
  int64_t sources;
  int32_t mode; /* covdl_mode */

  /* dictionary learning */
  int64_t sparsity_k;
  int32_t dict_max_iters;
  double dict_tol;
  int32_t update_rule; /* covdl_update_rule */
  int32_t nonneg;
  uint64_t dict_seed;
  int32_t dict_restarts; /* seeded local-search starts; 0 runs the plain alternation */
  int32_t rank1_atoms;   /* keep atoms on lifted outer products during the search */

  /* projector fit */
  int32_t restarts;
  int32_t opt_max_iters;
  double grad_tol;
  int32_t use_lbfgs;
  int32_t memory;
  uint64_t opt_seed;

  int32_t estimate_powers;
} covdl_learn_options;

/* Message for the last failed call on this thread; never NULL. */
COVDL_API const char* covdl_last_error(void);
COVDL_API const char* covdl_status_name(covdl_status status);
COVDL_API const char* covdl_version(void);

/* 0 restores the hardware default. */
COVDL_API covdl_status covdl_set_max_threads(int32_t threads);
COVDL_API int32_t covdl_max_threads(void);

COVDL_API covdl_mode covdl_select_mode(int64_t channels, int64_t sources);

/* Matrices are exchanged row-major. */
COVDL_API covdl_status covdl_matrix_create(int64_t rows, int64_t cols, const double* row_major,
                                           covdl_matrix** out);
COVDL_API void covdl_matrix_free(covdl_matrix* m);
COVDL_API int64_t covdl_matrix_rows(const covdl_matrix* m);
COVDL_API int64_t covdl_matrix_cols(const covdl_matrix* m);
COVDL_API covdl_status covdl_matrix_get(const covdl_matrix* m, int64_t row, int64_t col,
                                        double* value);
COVDL_API covdl_status covdl_matrix_copy(const covdl_matrix* m, double* row_major,
                                         size_t capacity);
/* ".csv" paths use CSV, anything else the binary container. */
COVDL_API covdl_status covdl_matrix_load(const char* path, covdl_matrix** out);
COVDL_API covdl_status covdl_matrix_save(const covdl_matrix* m, const char* path);

COVDL_API covdl_status covdl_scenario_preset(int32_t scenario, covdl_scenario* out);
COVDL_API covdl_status covdl_simulate(const covdl_scenario* scenario, covdl_truth** out);
COVDL_API void covdl_truth_free(covdl_truth* t);
COVDL_API covdl_status covdl_truth_recording(const covdl_truth* t, covdl_matrix** out);
COVDL_API covdl_status covdl_truth_mixing(const covdl_truth* t, covdl_matrix** out);
/* N x S per-segment source powers. */
COVDL_API covdl_status covdl_truth_powers(const covdl_truth* t, covdl_matrix** out);
COVDL_API int64_t covdl_truth_segment_count(const covdl_truth* t);
/* Writes the sorted active indices of segment s; *count receives the set size
   even when capacity is too small. */
COVDL_API covdl_status covdl_truth_active_set(const covdl_truth* t, int64_t s, int64_t* indices,
                                              size_t capacity, size_t* count);
COVDL_API int32_t covdl_truth_coherence_cap_met(const covdl_truth* t);

COVDL_API void covdl_segmentation_default(covdl_segmentation* out);
COVDL_API covdl_status covdl_lift(const covdl_matrix* recording, double sample_rate,
                                  const covdl_segmentation* plan, covdl_dataset** out);
/* Wraps columns that are already half-vectorized covariances. */
COVDL_API covdl_status covdl_dataset_from_lifted(const covdl_matrix* lifted, int32_t frobenius,
                                                 covdl_dataset** out);
COVDL_API void covdl_dataset_free(covdl_dataset* d);
COVDL_API int64_t covdl_dataset_channels(const covdl_dataset* d);
COVDL_API int64_t covdl_dataset_segment_count(const covdl_dataset* d);
COVDL_API covdl_status covdl_dataset_lifted(const covdl_dataset* d, covdl_matrix** out);

COVDL_API void covdl_learn_options_default(covdl_learn_options* out);
/* Succeeds when the optimizer stops early; check covdl_result_converged. */
COVDL_API covdl_status covdl_learn(const covdl_dataset* d, const covdl_learn_options* options,
                                   covdl_result** out);
COVDL_API void covdl_result_free(covdl_result* r);
COVDL_API covdl_mode covdl_result_mode(const covdl_result* r);
COVDL_API int32_t covdl_result_converged(const covdl_result* r);
COVDL_API covdl_status covdl_result_mixing(const covdl_result* r, covdl_matrix** out);
COVDL_API covdl_status covdl_result_powers(const covdl_result* r, covdl_matrix** out);
COVDL_API size_t covdl_result_trace_length(const covdl_result* r);
COVDL_API covdl_status covdl_result_trace(const covdl_result* r, double* values, size_t capacity);
COVDL_API size_t covdl_result_warning_count(const covdl_result* r);
COVDL_API const char* covdl_result_warning(const covdl_result* r, size_t i);
/* key = value lines describing the run. */
COVDL_API covdl_status covdl_result_diagnostics(const covdl_result* r, char* buffer,
                                                size_t capacity, size_t* needed);

COVDL_API covdl_status covdl_evaluate(const covdl_matrix* a_true, const covdl_matrix* a_est,
                                      double threshold, covdl_report** out);
COVDL_API void covdl_report_free(covdl_report* r);
COVDL_API double covdl_report_ratio(const covdl_report* r);
COVDL_API int64_t covdl_report_recovered(const covdl_report* r);
COVDL_API size_t covdl_report_pair_count(const covdl_report* r);
COVDL_API covdl_status covdl_report_pair(const covdl_report* r, size_t i, int64_t* true_index,
                                         int64_t* est_index, double* correlation);
/* Text outputs are NUL-terminated; *needed includes the terminator. Passing a
   NULL buffer only queries the size. */
COVDL_API covdl_status covdl_report_text(const covdl_report* r, char* buffer, size_t capacity,
                                         size_t* needed);
COVDL_API covdl_status covdl_report_csv(const covdl_report* r, char* buffer, size_t capacity,
                                        size_t* needed);

#ifdef __cplusplus
}
#endif

#endif
