#ifndef ZEITLIN_H
#define ZEITLIN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define ZS_SCHEME_ISOMP 0

#define ZS_SCHEME_HEUN 1

typedef enum ZsStatus {
  ZS_STATUS_OK = 0,
  ZS_STATUS_NULL_POINTER = 1,
  ZS_STATUS_INVALID_ARGUMENT = 2,
  ZS_STATUS_DIMENSION_MISMATCH = 3,
  ZS_STATUS_NON_CONVERGENCE = 4,
  ZS_STATUS_NUMERICAL = 5,
  ZS_STATUS_IO = 6,
  ZS_STATUS_PANIC = 7,
} ZsStatus;

typedef struct ZsBasis ZsBasis;

typedef struct ZsLaplacian ZsLaplacian;

typedef struct ZsSimulation ZsSimulation;

typedef struct ZsDiagnostics {
  double t;
  double energy;
  double c2;
  double c3;
  double c4;
  double lx;
  double ly;
  double lz;
  double gamma;
} ZsDiagnostics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *zs_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *zs_version(void);

/**
 * Wigner 3j symbol with every argument given as twice its value.
 *
 * # Safety
 * `out` must be a valid pointer to a double.
 */
enum ZsStatus zs_wigner3j(int64_t two_j1,
                          int64_t two_j2,
                          int64_t two_j3,
                          int64_t two_m1,
                          int64_t two_m2,
                          int64_t two_m3,
                          double *out);

/**
 * Physical seconds per step for matrix size `n`, step `h` and initial
 * Frobenius norm `norm`.
 *
 * # Safety
 * `out` must be a valid pointer to a double.
 */
enum ZsStatus zs_time_scale(size_t n, double h, double norm, double *out);

/**
 * Strengths making the point vortices at inclinations `theta` and azimuths
 * `phi` a zero-momentum configuration, scaled so the first is one.
 *
 * # Safety
 * `phi`, `theta` and `gamma_out` must each point to `count` doubles.
 */
enum ZsStatus zs_pv_strengths(const double *phi,
                              const double *theta,
                              size_t count,
                              double *gamma_out);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum ZsStatus zs_basis_new(size_t n, struct ZsBasis **out);

/**
 * # Safety
 * `b` must come from [`zs_basis_new`] and not be used afterwards.
 */
void zs_basis_free(struct ZsBasis *b);

/**
 * Dense basis element `T_lm` written to `out` (`2 N²` doubles).
 *
 * # Safety
 * `b` must be a live basis handle and `out` must hold `len` doubles.
 */
enum ZsStatus zs_basis_element(const struct ZsBasis *b,
                               size_t l,
                               int64_t m,
                               double *out,
                               size_t len);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum ZsStatus zs_laplacian_new(size_t n, struct ZsLaplacian **out);

/**
 * # Safety
 * `l` must come from [`zs_laplacian_new`] and not be used afterwards.
 */
void zs_laplacian_free(struct ZsLaplacian *l);

/**
 * Applies the discrete Laplacian (`inverse = 0`) or its inverse.
 *
 * # Safety
 * `input` and `output` must each hold `len = 2 N²` doubles.
 */
enum ZsStatus zs_laplacian_apply(const struct ZsLaplacian *l,
                                 int32_t inverse,
                                 const double *input,
                                 double *output,
                                 size_t len);

/**
 * New simulation of size `n` with scheme [`ZS_SCHEME_ISOMP`] or
 * [`ZS_SCHEME_HEUN`], step `h` in bracket time and rotation rate `omega`.
 * The state starts at zero.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum ZsStatus zs_sim_new(size_t n,
                         int32_t scheme,
                         double h,
                         double omega,
                         struct ZsSimulation **out);

/**
 * # Safety
 * `s` must come from [`zs_sim_new`] and not be used afterwards.
 */
void zs_sim_free(struct ZsSimulation *s);

/**
 * Replaces the state with a seeded random field of unit norm.
 *
 * # Safety
 * `s` must be a live simulation handle.
 */
enum ZsStatus zs_sim_init_random(struct ZsSimulation *s,
                                 uint64_t seed,
                                 double eps,
                                 int32_t zero_momentum);

/**
 * # Safety
 * `s` must be a live simulation handle and `data` must hold `len` doubles.
 */
enum ZsStatus zs_sim_set_matrix(struct ZsSimulation *s, const double *data, size_t len);

/**
 * # Safety
 * `s` must be a live simulation handle and `out` must hold `len` doubles.
 */
enum ZsStatus zs_sim_get_matrix(const struct ZsSimulation *s, double *out, size_t len);

/**
 * Advances `count` steps. On failure the state is left at the last
 * completed step.
 *
 * # Safety
 * `s` must be a live simulation handle.
 */
enum ZsStatus zs_sim_step(struct ZsSimulation *s, uint64_t count);

/**
 * Steps taken since the state was last set.
 *
 * # Safety
 * `s` must be a live simulation handle.
 */
uint64_t zs_sim_step_count(const struct ZsSimulation *s);

/**
 * Conserved quantities of the current state; `t` is in bracket time.
 *
 * # Safety
 * `s` must be a live simulation handle and `out` a valid pointer.
 */
enum ZsStatus zs_sim_diagnostics(const struct ZsSimulation *s, struct ZsDiagnostics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ZEITLIN_H */
