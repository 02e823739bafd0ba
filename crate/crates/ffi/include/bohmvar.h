#ifndef BOHMVAR_H
#define BOHMVAR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum BvStatus {
  BV_STATUS_OK = 0,
  BV_STATUS_NULL_ARGUMENT = 1,
  BV_STATUS_INVALID_STRING = 2,
  // Malformed descriptor, unknown name or out-of-range parameter.
  BV_STATUS_CONFIG = 3,
  BV_STATUS_AT_NODE = 4,
  BV_STATUS_UNSUPPORTED = 5,
  // Dimension mismatch, non-finite values or other numerical failure.
  BV_STATUS_NUMERICAL = 6,
  BV_STATUS_DIVERGENCE = 7,
  BV_STATUS_IO = 8,
  BV_STATUS_BUFFER_TOO_SMALL = 9,
  BV_STATUS_PANIC = 10,
} BvStatus;

// Opaque operator handle, bound to the state it was built for.
typedef struct BvOperator BvOperator;

// Opaque wave-function handle.
typedef struct BvState BvState;

// Scalar part of a decomposition report.
typedef struct BvDecomposition {
  double mean;
  double var_q;
  double var_b;
  double q_term;
  double deficit;
  double residual;
  double tol_identity;
  bool identity_holds;
  bool converged;
} BvDecomposition;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. Valid until the
// next failing call on the same thread.
const char *bv_last_error(void);

// Library version as a static NUL-terminated string.
const char *bv_version(void);

// Builds a state from a descriptor such as `ho1d:n=2`.
//
// # Safety
// `descriptor` must be a NUL-terminated string and `out_state` writable.
enum BvStatus bv_state_new(const char *descriptor, struct BvState **out_state);

// # Safety
// `state` must come from [`bv_state_new`] and not be used afterwards.
void bv_state_free(struct BvState *state);

// Spatial dimension, or 0 for a null handle.
//
// # Safety
// `state` must be null or a live handle.
size_t bv_state_dim(const struct BvState *state);

// Number of spinor components, or 0 for a null handle.
//
// # Safety
// `state` must be null or a live handle.
size_t bv_state_components(const struct BvState *state);

// Writes the components of ψ(x) as interleaved (re, im) pairs.
// `out_len` must be at least `2 * components`.
//
// # Safety
// `x` must hold `len` doubles and `values` `out_len` doubles.
enum BvStatus bv_state_value(const struct BvState *state,
                             const double *x,
                             size_t len,
                             double *values,
                             size_t out_len);

// Guidance velocity at `x`; writes `len` doubles to `velocity`.
//
// # Safety
// `x` and `velocity` must each hold `len` doubles.
enum BvStatus bv_guiding_velocity(const struct BvState *state,
                                  const double *x,
                                  size_t len,
                                  double *velocity);

// Builds an operator such as `momentum:axis=1` for `state`.
//
// # Safety
// `spec` must be NUL-terminated, `state` live and `out_op` writable.
enum BvStatus bv_operator_new(const char *spec,
                              const struct BvState *state,
                              struct BvOperator **out_op);

// # Safety
// `op` must come from [`bv_operator_new`] and not be used afterwards.
void bv_operator_free(struct BvOperator *op);

// Local weak value Re[ψ†Âψ]/|ψ|² at `x`.
//
// # Safety
// Handles must be live, `x` must hold `len` doubles, `value` writable.
enum BvStatus bv_weak_value(const struct BvOperator *op,
                            const struct BvState *state,
                            const double *x,
                            size_t len,
                            double *value);

// Variance decomposition with the default quadrature scheme.
//
// # Safety
// Handles must be live and `report` writable.
enum BvStatus bv_decompose(const struct BvOperator *op,
                           const struct BvState *state,
                           struct BvDecomposition *report);

// Full decomposition report as JSON; free with [`bv_string_free`].
//
// # Safety
// Handles must be live and `json` writable.
enum BvStatus bv_decompose_json(const struct BvOperator *op,
                                const struct BvState *state,
                                char **json);

// Runs a scenario from flat `key=value` text (the same keys as the
// command-line tool) without writing files. Stores the report JSON in
// `json` and the tool's exit code in `exit_code`; both are set even when
// the scenario itself fails.
//
// # Safety
// `config` must be NUL-terminated; `json` and `exit_code` writable.
enum BvStatus bv_run_config(const char *config, char **json, int32_t *exit_code);

// # Safety
// `s` must be null or a string returned by this library.
void bv_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BOHMVAR_H */
