#ifndef FKBRIDGE_H
#define FKBRIDGE_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FkMethod {
  FK_METHOD_HEAT = 0,
  FK_METHOD_PARAMETRIX = 1,
  FK_METHOD_MONTE_CARLO = 2,
} FkMethod;

typedef enum FkPotentialKind {
  FK_POTENTIAL_KIND_ZERO = 0,
  /**
   * Uses the `value` argument.
   */
  FK_POTENTIAL_KIND_CONSTANT = 1,
  FK_POTENTIAL_KIND_QUANTUM = 2,
} FkPotentialKind;

/**
 * Result of every fallible call.
 */
typedef enum FkStatus {
  FK_STATUS_OK = 0,
  /**
   * Argument outside the domain of the operation.
   */
  FK_STATUS_DOMAIN = 1,
  /**
   * Non-finite or non-positive value where one was required.
   */
  FK_STATUS_NUMERIC = 2,
  /**
   * An iteration did not reach its tolerance.
   */
  FK_STATUS_CONVERGENCE = 3,
  /**
   * Two computations that must agree do not.
   */
  FK_STATUS_CONSISTENCY = 4,
  /**
   * Invalid option value.
   */
  FK_STATUS_CONFIG = 5,
  FK_STATUS_IO = 6,
  /**
   * A required pointer was null.
   */
  FK_STATUS_NULL_POINTER = 7,
  /**
   * An output buffer is shorter than the data.
   */
  FK_STATUS_BUFFER_TOO_SMALL = 8,
  /**
   * Internal failure; the library caught a panic.
   */
  FK_STATUS_INTERNAL = 9,
} FkStatus;

/**
 * Solved quantum-example bridge with its fields and drift.
 */
typedef struct FkBridge FkBridge;

/**
 * Uniform spatial grid.
 */
typedef struct FkGrid FkGrid;

/**
 * Kernel matrix `k(y_i, s, x_j, t)`.
 */
typedef struct FkKernel FkKernel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *fk_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *fk_version(void);

/**
 * Creates a uniform grid of `n` points on `[lo, hi]`.
 */
enum FkStatus fk_grid_new(double lo, double hi, size_t n, struct FkGrid **grid);

void fk_grid_free(struct FkGrid *grid);

/**
 * Number of grid points, or 0 for a null handle.
 */
size_t fk_grid_len(const struct FkGrid *grid);

enum FkStatus fk_grid_points(const struct FkGrid *grid, double *points, size_t len);

/**
 * Builds `k(., s, ., t)` with default options; `value` is read only for
 * a constant potential and `seed` only for Monte Carlo.
 */
enum FkStatus fk_kernel_new(const struct FkGrid *grid,
                            enum FkPotentialKind potential_kind,
                            double value,
                            enum FkMethod method,
                            double s,
                            double t,
                            uint64_t seed,
                            struct FkKernel **kernel);

void fk_kernel_free(struct FkKernel *kernel);

/**
 * Side length of the square matrix, or 0 for a null handle.
 */
size_t fk_kernel_dim(const struct FkKernel *kernel);

/**
 * Copies the values in row-major order (`y` index major).
 */
enum FkStatus fk_kernel_values(const struct FkKernel *kernel, double *values, size_t len);

/**
 * Copies standard errors (row-major); `Domain` if the kernel has none.
 */
enum FkStatus fk_kernel_stderr(const struct FkKernel *kernel, double *values, size_t len);

/**
 * Relative Chapman-Kolmogorov residual of `k_sr * k_rt` against `k_st`
 * on the interior window.
 */
enum FkStatus fk_chapman_kolmogorov(const struct FkKernel *k_sr,
                                    const struct FkKernel *k_rt,
                                    const struct FkKernel *k_st,
                                    double *residual);

/**
 * Solves the quantum example on `[lo, hi]` with `n` points and fields on
 * a time mesh of spacing `mesh_step` over `[0, 1]`.
 */
enum FkStatus fk_bridge_quantum_new(double lo,
                                    double hi,
                                    size_t n,
                                    double mesh_step,
                                    struct FkBridge **bridge);

void fk_bridge_free(struct FkBridge *bridge);

/**
 * Final marginal residual and iteration count of the solver.
 */
enum FkStatus fk_bridge_residual(const struct FkBridge *bridge,
                                 double *residual,
                                 size_t *iterations);

/**
 * Number of time-mesh points, or 0 for a null handle.
 */
size_t fk_bridge_mesh_len(const struct FkBridge *bridge);

/**
 * Copies `rho(., t_k)` at time-mesh index `k`.
 */
enum FkStatus fk_bridge_density(const struct FkBridge *bridge, size_t k, double *rho, size_t len);

/**
 * Drift `b(x, t)` of the bridge diffusion.
 */
enum FkStatus fk_bridge_drift(const struct FkBridge *bridge, double x, double t, double *drift);

/**
 * Samples `n_paths` paths from `rho(., 0)` with step `dt` and copies the
 * states at the horizon.
 */
enum FkStatus fk_bridge_sample_final(const struct FkBridge *bridge,
                                     size_t n_paths,
                                     double dt,
                                     uint64_t seed,
                                     double *states,
                                     size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FKBRIDGE_H */
