#include <math.h>
#include <stdio.h>
#include "prd.h"

#define CHECK(call)                                                   \
  do {                                                                \
    PrdStatus st_ = (call);                                           \
    if (st_ != PRD_STATUS_OK) {                                       \
      char msg_[256];                                                 \
      prd_last_error_message(msg_, sizeof msg_);                      \
      fprintf(stderr, "%s failed (%d): %s\n", #call, (int)st_, msg_); \
      return 1;                                                       \
    }                                                                 \
  } while (0)

int main(void) {
  PrdTask *task = NULL;
  if (prd_task_new("teapot", &task) != PRD_STATUS_UNKNOWN_TASK || task != NULL) {
    return 2;
  }
  CHECK(prd_task_new("quadratic2d", &task));
  size_t dim = prd_task_dim(task);
  if (dim != 2) return 3;

  double theta[2] = {0.5, -0.25};
  double sigma[2] = {0.3, 0.3};
  double loss = 0.0;
  CHECK(prd_task_loss(task, theta, dim, &loss));
  if (fabs(loss - 0.3125) > 1e-15) return 4;

  PrdEstimatorConfig cfg = prd_estimator_config_default();
  cfg.sample_count = 20000;
  double grad[2];
  size_t evals = 0;
  CHECK(prd_estimate_gradient(task, theta, sigma, dim, &cfg, 1, grad, &evals));
  if (evals != 20000 || fabs(grad[0] - 1.0) > 0.1 || fabs(grad[1] + 0.5) > 0.1) return 5;

  cfg = prd_estimator_config_default();
  cfg.estimator_kind = PRD_ESTIMATOR_KIND_REPARAM;
  PrdRun *run = NULL;
  double sigma_min[2] = {0.01, 0.01};
  CHECK(prd_run_optimization(task, theta, dim, &cfg, sigma, sigma_min, PRD_SCHEDULE_KIND_LINEAR, 200, 0.05, 0,
                             &run));
  if (prd_run_len(run) != 200) return 6;
  PrdRunEntry last;
  double final_theta[2];
  CHECK(prd_run_entry(run, 199, &last, final_theta, dim));
  if (last.n_evals != 400 || last.param_mse > 1e-3) return 7;

  prd_run_free(run);
  prd_task_free(task);
  printf("ok %.3g\n", last.param_mse);
  return 0;
}
