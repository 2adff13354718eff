#ifndef TORUSFLOW_H
#define TORUSFLOW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum TfStatus {
  /**
   * Success.
   */
  TfOk = 0,
  /**
   * A required pointer argument was null.
   */
  TfErrNull = 1,
  /**
   * An argument was out of range or otherwise invalid.
   */
  TfErrInvalid = 2,
  /**
   * The computation itself failed (diverged, not found, ...).
   */
  TfErrRuntime = 3,
  /**
   * A panic was caught at the boundary; this is a bug.
   */
  TfErrInternal = 4,
} TfStatus;

/**
 * Opaque flow model handle.
 */
typedef struct TfModel TfModel;

/**
 * Opaque partition result handle.
 */
typedef struct TfPartition TfPartition;

/**
 * Opaque Brownian realization handle.
 */
typedef struct TfPath TfPath;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Pointer to the thread-local message for the most recent error. Valid
 * until the next failing call on the same thread; do not free.
 */
const char *tf_last_error(void);

/**
 * Create the built-in default model. Free with `tf_model_free`.
 */
enum TfStatus tf_model_default(struct TfModel **out);

/**
 * Parse a model from its text representation.
 */
enum TfStatus tf_model_from_text(const char *text, struct TfModel **out);

/**
 * Write the model's text representation into `buf` (NUL-terminated,
 * truncated to `len` bytes). Returns the required size including the NUL
 * through `needed` when non-null.
 */
enum TfStatus tf_model_to_text(const struct TfModel *model,
                               char *buf,
                               uintptr_t len,
                               uintptr_t *needed);

/**
 * Hex SHA-256 of the model's canonical text (65 bytes incl. NUL).
 */
enum TfStatus tf_model_hash(const struct TfModel *model, char *buf, uintptr_t len);

/**
 * Number of independent Brownian components the model is driven by.
 */
enum TfStatus tf_model_dim(const struct TfModel *model, uintptr_t *out);

void tf_model_free(struct TfModel *model);

/**
 * Sample a seeded Brownian realization: `dim` components over `[0,
 * horizon]` on the given base step. Free with `tf_path_free`.
 */
enum TfStatus tf_path_sample(uint64_t seed,
                             uintptr_t dim,
                             double horizon,
                             double base_step,
                             struct TfPath **out);

void tf_path_free(struct TfPath *path);

/**
 * Advect the point `(x, y)` from time `t0` to `t1` under the realization;
 * writes the lifted (unwrapped) end position into `out_xy[2]`.
 */
enum TfStatus tf_flow_map(const struct TfModel *model,
                          const struct TfPath *path,
                          double x,
                          double y,
                          double t0,
                          double t1,
                          double *out_xy);

/**
 * Top Lyapunov exponent estimate; writes the estimate and its standard
 * error.
 */
enum TfStatus tf_top_lyapunov(const struct TfModel *model,
                              uint64_t seed,
                              double t_total,
                              double h,
                              double renorm_interval,
                              double *out_lambda,
                              double *out_stderr);

/**
 * Detect a hyperbolic stopping time for the midpoint of the straight
 * segment `(ax,ay)-(bx,by)` with default stopping parameters; writes the
 * stopping time. `TF_ERR_RUNTIME` when none is found within the horizon.
 */
enum TfStatus tf_detect_hyperbolic_time(const struct TfModel *model,
                                        const struct TfPath *path,
                                        double ax,
                                        double ay,
                                        double bx,
                                        double by,
                                        double *out_tau);

/**
 * Partition the straight segment `(ax,ay)-(bx,by)` into stopping-time
 * pieces under the realization with default partition parameters. Free the
 * result with `tf_partition_free`.
 */
enum TfStatus tf_partition_segment(const struct TfModel *model,
                                   const struct TfPath *path,
                                   double ax,
                                   double ay,
                                   double bx,
                                   double by,
                                   struct TfPartition **out);

/**
 * Number of pieces in a partition result.
 */
enum TfStatus tf_partition_len(const struct TfPartition *part, uintptr_t *out);

/**
 * Fraction of the material measure covered by the pieces.
 */
enum TfStatus tf_partition_coverage(const struct TfPartition *part, double *out);

/**
 * Fetch piece `i`: material interval, stopping time (blocks), and image
 * length at the stopping time.
 */
enum TfStatus tf_partition_piece(const struct TfPartition *part,
                                 uintptr_t i,
                                 double *out_s_lo,
                                 double *out_s_hi,
                                 uint32_t *out_n_j,
                                 double *out_image_length);

void tf_partition_free(struct TfPartition *part);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TORUSFLOW_H */
