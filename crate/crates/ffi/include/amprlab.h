#ifndef AMPRLAB_H
#define AMPRLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Per-coordinate vectors of an AMPR result.
 */
typedef enum AmprlabField {
  AMPRLAB_FIELD_H = 0,
  AMPRLAB_FIELD_A = 1,
  AMPRLAB_FIELD_W_HAT = 2,
  AMPRLAB_FIELD_R_HAT = 3,
} AmprlabField;

typedef enum AmprlabPsi {
  AMPRLAB_PSI_IDENTITY = 0,
  AMPRLAB_PSI_SQUARE = 1,
} AmprlabPsi;

typedef enum AmprlabStatus {
  AMPRLAB_STATUS_OK = 0,
  AMPRLAB_STATUS_INVALID_ARGUMENT = 1,
  AMPRLAB_STATUS_NULL_POINTER = 2,
  AMPRLAB_STATUS_DIVERGED = 3,
  AMPRLAB_STATUS_INFEASIBLE_DOMAIN = 4,
  AMPRLAB_STATUS_INVALID_START = 5,
  AMPRLAB_STATUS_DEGENERATE_SAMPLE = 6,
  AMPRLAB_STATUS_CONFIG = 7,
  AMPRLAB_STATUS_IO = 8,
  AMPRLAB_STATUS_BUFFER_TOO_SMALL = 9,
  AMPRLAB_STATUS_PANIC = 10,
} AmprlabStatus;

/**
 * Opaque AMPR fixed point.
 */
typedef struct AmprlabAmprResult AmprlabAmprResult;

/**
 * Opaque problem instance.
 */
typedef struct AmprlabInstance AmprlabInstance;

typedef struct AmprlabSmoothedMoments {
  double m1;
  double m2;
  double mderiv;
} AmprlabSmoothedMoments;

typedef struct AmprlabResamplingMoments {
  double f1;
  double f2;
} AmprlabResamplingMoments;

typedef struct AmprlabSolverOptions {
  size_t max_iters;
  double tol;
  double damping;
  double init_qhat;
  double init_vhat;
} AmprlabSolverOptions;

typedef struct AmprlabAmprSummary {
  double qhat;
  double vhat;
  double chi;
  double v;
  /**
   * Data-driven variance of the averaged unbiased estimator.
   */
  double sigma2;
  size_t iterations;
  bool converged;
} AmprlabAmprSummary;

typedef struct AmprlabGampSummary {
  double qhat;
  double chi;
  size_t iterations;
  bool converged;
} AmprlabGampSummary;

typedef struct AmprlabSeModel {
  double alpha;
  double delta;
  double rho;
  double lambda;
  double gamma;
  double mu_b;
} AmprlabSeModel;

typedef struct AmprlabSeResult {
  double mse;
  double chi;
  double v;
  double qhat;
  double chihat;
  double vhat;
  double sigma2;
  size_t iterations;
  bool converged;
} AmprlabSeResult;

typedef struct AmprlabOptimum {
  /**
   * `INFINITY` when resampling does not help.
   */
  double mu_b_star;
  double lambda_star;
  double gamma_star;
  double sigma2_star;
  double s2_star;
  double ratio;
  double unique_frac;
  bool interpolator;
} AmprlabOptimum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *amprlab_last_error(void);

enum AmprlabStatus amprlab_denoise(double h, double qhat, double lambda, double gamma, double *out);

enum AmprlabStatus amprlab_denoise_deriv(double h,
                                         double qhat,
                                         double lambda,
                                         double gamma,
                                         double *out);

enum AmprlabStatus amprlab_smoothed_moments(double h,
                                            double vhat,
                                            double qhat,
                                            double lambda,
                                            double gamma,
                                            struct AmprlabSmoothedMoments *out);

enum AmprlabStatus amprlab_poisson_moments(double chi,
                                           double mu_b_value,
                                           struct AmprlabResamplingMoments *out);

enum AmprlabStatus amprlab_instance_sample(size_t n,
                                           double alpha,
                                           double delta,
                                           double rho,
                                           uint64_t seed,
                                           struct AmprlabInstance **out);

/**
 * Copy caller buffers into a new instance; `x` is `m·n` values, row-major.
 */
enum AmprlabStatus amprlab_instance_from_parts(size_t m,
                                               size_t n,
                                               const double *x,
                                               const double *y,
                                               const double *w0,
                                               double delta,
                                               struct AmprlabInstance **out);

enum AmprlabStatus amprlab_instance_load(const char *path, struct AmprlabInstance **out);

enum AmprlabStatus amprlab_instance_save(const struct AmprlabInstance *inst, const char *path);

enum AmprlabStatus amprlab_instance_dims(const struct AmprlabInstance *inst, size_t *m, size_t *n);

/**
 * Copy the true signal `w0` (`n` values).
 */
enum AmprlabStatus amprlab_instance_signal(const struct AmprlabInstance *inst,
                                           double *buf,
                                           size_t len);

void amprlab_instance_free(struct AmprlabInstance *inst);

struct AmprlabSolverOptions amprlab_solver_options_default(void);

/**
 * Run AMPR. `opts` may be null for defaults.
 */
enum AmprlabStatus amprlab_run_ampr(const struct AmprlabInstance *inst,
                                    double lambda,
                                    double gamma,
                                    double mu_b_value,
                                    const struct AmprlabSolverOptions *opts,
                                    struct AmprlabAmprResult **out);

enum AmprlabStatus amprlab_ampr_summary(const struct AmprlabAmprResult *res,
                                        struct AmprlabAmprSummary *out);

/**
 * Copy one per-coordinate vector; `A` has `m` entries, the others `n`.
 */
enum AmprlabStatus amprlab_ampr_field(const struct AmprlabAmprResult *res,
                                      enum AmprlabField field,
                                      double *buf,
                                      size_t len);

/**
 * Bootstrap average of `ψ` applied to each coordinate (`n` values).
 */
enum AmprlabStatus amprlab_ampr_bootstrap_statistics(const struct AmprlabAmprResult *res,
                                                     enum AmprlabPsi psi,
                                                     double *buf,
                                                     size_t len);

void amprlab_ampr_free(struct AmprlabAmprResult *res);

/**
 * Run weighted GAMP and copy the estimate into `w_out` (`n` values).
 * `weights` may be null for uniform weights; otherwise it holds `m` values.
 */
enum AmprlabStatus amprlab_run_gamp(const struct AmprlabInstance *inst,
                                    double lambda,
                                    double gamma,
                                    const double *weights,
                                    const struct AmprlabSolverOptions *opts,
                                    double *w_out,
                                    size_t w_len,
                                    struct AmprlabGampSummary *out);

/**
 * Run the state evolution from the standard start with default options.
 */
enum AmprlabStatus amprlab_run_se(const struct AmprlabSeModel *model, struct AmprlabSeResult *out);

/**
 * Minimize the predicted variance over `(μ_B, λ)` (and `γ` when `gamma`
 * is NaN) with `restarts` starting points.
 */
enum AmprlabStatus amprlab_minimize_variance(double alpha,
                                             double delta,
                                             double rho,
                                             double gamma,
                                             size_t restarts,
                                             struct AmprlabOptimum *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AMPRLAB_H */
