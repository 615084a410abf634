#ifndef PRD_H
#define PRD_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum PrdStatus {
  PRD_STATUS_OK = 0,
  PRD_STATUS_NULL_POINTER = 1,
  PRD_STATUS_INVALID_ARGUMENT = 2,
  PRD_STATUS_UNKNOWN_TASK = 3,
  PRD_STATUS_UNSUPPORTED = 4,
  PRD_STATUS_TASK_FAILURE = 5,
  PRD_STATUS_NON_FINITE = 6,
  PRD_STATUS_IO = 7,
  PRD_STATUS_PANIC = 8,
} PrdStatus;

typedef enum PrdSamplingMode {
  PRD_SAMPLING_MODE_IMPORTANCE = 0,
  PRD_SAMPLING_MODE_GAUSSIAN = 1,
  PRD_SAMPLING_MODE_UNIFORM = 2,
} PrdSamplingMode;

typedef enum PrdNormalization {
  PRD_NORMALIZATION_UNBIASED = 0,
  PRD_NORMALIZATION_ALG1_RAW = 1,
} PrdNormalization;

typedef enum PrdEstimatorKind {
  PRD_ESTIMATOR_KIND_SCORE = 0,
  PRD_ESTIMATOR_KIND_REPARAM = 1,
  PRD_ESTIMATOR_KIND_FD = 2,
  PRD_ESTIMATOR_KIND_SPSA = 3,
  PRD_ESTIMATOR_KIND_HARD = 4,
} PrdEstimatorKind;

typedef enum PrdScheduleKind {
  PRD_SCHEDULE_KIND_LINEAR = 0,
  PRD_SCHEDULE_KIND_CONSTANT = 1,
} PrdScheduleKind;

// The log of one optimization run.
typedef struct PrdRun PrdRun;

// A registered task.
typedef struct PrdTask PrdTask;

// Enum-valued fields hold the `PrdSamplingMode`, `PrdNormalization` and
// `PrdEstimatorKind` values as plain integers.
typedef struct PrdEstimatorConfig {
  size_t sample_count;
  uint32_t sampling_mode;
  bool antithetic;
  uint32_t normalization;
  uint32_t estimator_kind;
  // FD/SPSA probe distance as a fraction of the domain extent.
  double step;
} PrdEstimatorConfig;

typedef struct PrdRunEntry {
  size_t iteration;
  double image_mse;
  double param_mse;
  size_t n_evals;
  bool clamped;
} PrdRunEntry;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Length in bytes, including the terminating NUL, of the calling thread's
// last error message; 0 when the last call succeeded.
size_t prd_last_error_length(void);

// Copies the last error message into `buf` as a NUL-terminated string,
// truncating to `len` bytes. Returns the number of bytes written excluding
// the NUL, or -1 when there is no message or `buf` is null.
//
// # Safety
// `buf` must point to `len` writable bytes.
int prd_last_error_message(char *buf, size_t len);

// Creates a task by name (`disc2d`, `occlusion`, `shadow`, `sort`,
// `step`, `quadratic`, `quadratic2d`, `sigmoid`, `constant`).
//
// # Safety
// `name` must be a NUL-terminated string and `out` a writable pointer.
enum PrdStatus prd_task_new(const char *name, struct PrdTask **out);

// # Safety
// `task` must come from [`prd_task_new`] and not be used afterwards.
void prd_task_free(struct PrdTask *task);

// Parameter count; 0 for a null handle.
//
// # Safety
// `task` must be null or a live handle.
size_t prd_task_dim(const struct PrdTask *task);

// Writes the box domain and the reference parameters, each `dim` long.
//
// # Safety
// `task` must be a live handle; each output must hold `dim` doubles.
enum PrdStatus prd_task_domain(const struct PrdTask *task,
                               double *lo,
                               double *hi,
                               double *theta_ref,
                               size_t dim);

// # Safety
// `task` must be a live handle; `out` must hold `dim` doubles.
enum PrdStatus prd_task_initial_theta(const struct PrdTask *task,
                                      uint64_t seed,
                                      double *out,
                                      size_t dim);

// # Safety
// `task` must be a live handle; `theta` must hold `dim` doubles.
enum PrdStatus prd_task_loss(const struct PrdTask *task,
                             const double *theta,
                             size_t dim,
                             double *out);

// Product of per-dimension Gaussian densities at offset `tau`.
//
// # Safety
// `tau` and `sigma` must hold `dim` doubles; `out` must be writable.
enum PrdStatus prd_eval_kernel(const double *tau, const double *sigma, size_t dim, double *out);

// # Safety
// `tau`, `sigma` and `out` must hold `dim` doubles.
enum PrdStatus prd_eval_kernel_grad(const double *tau,
                                    const double *sigma,
                                    size_t dim,
                                    double *out);

// Magnitude drawn from the positivized kernel-gradient density for a
// uniform variate `xi` in (0, 1].
//
// # Safety
// `out` must be writable.
enum PrdStatus prd_inverse_cdf_sample(double xi, double sigma, double *out);

// # Safety
// `out` must be writable.
enum PrdStatus prd_positivized_density(double tau, double sigma, double *out);

// Two importance-sampled antithetic evaluations, unbiased normalization,
// score estimator.
struct PrdEstimatorConfig prd_estimator_config_default(void);

// Gradient estimate of the smoothed loss at `theta` with bandwidth `sigma`
// (parameter units). `n_evals` may be null.
//
// # Safety
// `task` must be a live handle, `config` readable, and `theta`, `sigma`
// and `grad` must hold `dim` doubles.
enum PrdStatus prd_estimate_gradient(const struct PrdTask *task,
                                     const double *theta,
                                     const double *sigma,
                                     size_t dim,
                                     const struct PrdEstimatorConfig *config,
                                     uint64_t seed,
                                     double *grad,
                                     size_t *n_evals);

// Runs Adam for `iters` iterations with the bandwidth moving from
// `sigma0` to `sigma_min` (parameter units). A null `theta0` starts from
// the task's initializer for `seed`. On success `*out` receives a run
// handle; on failure it is set to null.
//
// # Safety
// `task` must be a live handle, `config` readable, `sigma0` and
// `sigma_min` must hold `dim` doubles, `theta0` must be null or hold `dim`
// doubles, and `out` must be writable.
enum PrdStatus prd_run_optimization(const struct PrdTask *task,
                                    const double *theta0,
                                    size_t dim,
                                    const struct PrdEstimatorConfig *config,
                                    const double *sigma0,
                                    const double *sigma_min,
                                    uint32_t schedule,
                                    size_t iters,
                                    double lr,
                                    uint64_t seed,
                                    struct PrdRun **out);

// # Safety
// `run` must come from [`prd_run_optimization`] and not be used afterwards.
void prd_run_free(struct PrdRun *run);

// Number of logged iterations; 0 for a null handle.
//
// # Safety
// `run` must be null or a live handle.
size_t prd_run_len(const struct PrdRun *run);

// Copies entry `index` (0-based). `theta` may be null; otherwise it must
// hold `dim` doubles and receives the parameters after that iteration.
//
// # Safety
// `run` must be a live handle and `entry` writable.
enum PrdStatus prd_run_entry(const struct PrdRun *run,
                             size_t index,
                             struct PrdRunEntry *entry,
                             double *theta,
                             size_t dim);

// # Safety
// `run` must be a live handle; `theta` must hold `dim` doubles.
enum PrdStatus prd_run_final_theta(const struct PrdRun *run, double *theta, size_t dim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PRD_H */
