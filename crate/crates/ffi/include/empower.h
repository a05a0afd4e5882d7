#ifndef EMPOWER_H
#define EMPOWER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EmpStatus {
  EMP_STATUS_OK = 0,
  EMP_STATUS_NULL_POINTER = 1,
  EMP_STATUS_INVALID_ARGUMENT = 2,
  EMP_STATUS_DIMENSION_MISMATCH = 3,
  EMP_STATUS_NON_FINITE_STATE = 4,
  EMP_STATUS_NUMERICAL_FAILURE = 5,
  EMP_STATUS_CONFIG_ERROR = 6,
  EMP_STATUS_BUFFER_TOO_SMALL = 7,
  EMP_STATUS_IO_ERROR = 8,
  EMP_STATUS_PANIC = 9,
} EmpStatus;

typedef enum EmpVariant {
  EMP_VARIANT_CLASSIC = 0,
  EMP_VARIANT_KICKED_CEF = 1,
  EMP_VARIANT_CONTROLLED_LYAPUNOV = 2,
  // Uses `action_steps` and `gap_steps` from [`EmpHorizon`].
  EMP_VARIANT_GENERALIZED = 3,
} EmpVariant;

// Opaque handle to a finished rollout.
typedef struct EmpRollout EmpRollout;

// Opaque handle to a controlled system.
typedef struct EmpSystem EmpSystem;

typedef struct EmpChannel {
  double power;
  double noise_std;
  // Use `ρ²` instead of `ρ` as the channel gain.
  bool squared_gains;
} EmpChannel;

typedef struct EmpHorizon {
  enum EmpVariant variant;
  double dt;
  size_t horizon_steps;
  size_t action_steps;
  size_t gap_steps;
} EmpHorizon;

typedef struct EmpPolicy {
  struct EmpHorizon horizon;
  struct EmpChannel channel;
  double action_bound;
  size_t action_grid_size;
  double decision_dt;
  double sim_dt;
  size_t expectation_samples;
} EmpPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` as a
// NUL-terminated string, truncating to `cap` bytes. Returns the length the
// full message needs, including the terminator.
//
// # Safety
// `buf` must be null or point to `cap` writable bytes.
size_t emp_last_error_message(char *buf, size_t cap);

// Library version as a static NUL-terminated string.
const char *emp_version(void);

// Default channel: unit power and unit noise, gains `ρ`.
struct EmpChannel emp_channel_default(void);

// Policy with the library's default grid and timing for `variant`.
// `action_steps` and `gap_steps` start at zero and must be set for
// `EMP_VARIANT_GENERALIZED`.
struct EmpPolicy emp_policy_default(enum EmpVariant variant, double dt, size_t horizon_steps);

// # Safety
// `out` must be a valid pointer to writable storage for a handle.
enum EmpStatus emp_system_pendulum(double mass,
                                   double length,
                                   double gravity,
                                   struct EmpSystem **out);

// Double pendulum driven at the middle joint. `lc*` are distances to the
// link centres of mass and `i*` the link inertias about them.
//
// # Safety
// `out` must be a valid pointer to writable storage for a handle.
enum EmpStatus emp_system_double_pendulum(double m1,
                                          double m2,
                                          double l1,
                                          double l2,
                                          double lc1,
                                          double lc2,
                                          double i1,
                                          double i2,
                                          double gravity,
                                          struct EmpSystem **out);

// # Safety
// `out` must be a valid pointer to writable storage for a handle.
enum EmpStatus emp_system_cartpole(double cart_mass,
                                   double pole_mass,
                                   double pole_length,
                                   double gravity,
                                   struct EmpSystem **out);

// Scalar system `dx = alpha·x dt + gain·da`.
//
// # Safety
// `out` must be a valid pointer to writable storage for a handle.
enum EmpStatus emp_system_linear(double alpha, double gain, struct EmpSystem **out);

// Builds the system described by the `[system]` section of a TOML run
// configuration.
//
// # Safety
// `toml` must be a NUL-terminated UTF-8 string and `out` writable.
enum EmpStatus emp_system_from_config(const char *toml, struct EmpSystem **out);

// # Safety
// `sys` must be null or a handle from an `emp_system_*` constructor that
// has not been freed.
void emp_system_free(struct EmpSystem *sys);

// State dimension, or 0 for a null handle.
//
// # Safety
// `sys` must be null or a live handle.
size_t emp_system_state_dim(const struct EmpSystem *sys);

// Action dimension, or 0 for a null handle.
//
// # Safety
// `sys` must be null or a live handle.
size_t emp_system_action_dim(const struct EmpSystem *sys);

// Empowerment in nats at `state` for the variant and horizon in `h`.
//
// # Safety
// `sys` must be a live handle, `state` must point to `state_len` values,
// `h` and `c` must be valid, and `out_value` writable.
enum EmpStatus emp_empowerment(const struct EmpSystem *sys,
                               const double *state,
                               size_t state_len,
                               const struct EmpHorizon *h,
                               const struct EmpChannel *c,
                               double *out_value);

// Greedy empowerment-maximizing action at `state`.
//
// # Safety
// `sys` must be a live handle, `state` must point to `state_len` values,
// `p` must be valid, `action` must hold `action_cap` values, and
// `out_value` must be null or writable.
enum EmpStatus emp_greedy_action(const struct EmpSystem *sys,
                                 const double *state,
                                 size_t state_len,
                                 const struct EmpPolicy *p,
                                 double *action,
                                 size_t action_cap,
                                 double *out_value);

// Closed-loop greedy rollout. A rollout stopped by a non-finite state is
// still returned; check [`emp_rollout_failed`].
//
// # Safety
// `sys` must be a live handle, `x0` must point to `state_len` values, `p`
// must be valid and `out` writable.
enum EmpStatus emp_rollout_run(const struct EmpSystem *sys,
                               const double *x0,
                               size_t state_len,
                               double duration_s,
                               const struct EmpPolicy *p,
                               double process_std,
                               uint64_t seed,
                               struct EmpRollout **out);

// # Safety
// `ro` must be null or a rollout handle that has not been freed.
void emp_rollout_free(struct EmpRollout *ro);

// Number of recorded decision points (one per held action), or 0 for a null handle.
//
// # Safety
// `ro` must be null or a live handle.
size_t emp_rollout_len(const struct EmpRollout *ro);

// True when the rollout stopped early on a non-finite state.
//
// # Safety
// `ro` must be null or a live handle.
bool emp_rollout_failed(const struct EmpRollout *ro);

// Decision times in seconds.
//
// # Safety
// `ro` must be a live handle, `buf` must hold `cap` values, and `len_out`
// must be null or writable.
enum EmpStatus emp_rollout_times(const struct EmpRollout *ro,
                                 double *buf,
                                 size_t cap,
                                 size_t *len_out);

// States, row-major (`len × state_dim`).
//
// # Safety
// As for [`emp_rollout_times`].
enum EmpStatus emp_rollout_states(const struct EmpRollout *ro,
                                  double *buf,
                                  size_t cap,
                                  size_t *len_out);

// State at the end of the rollout (after the last held action).
//
// # Safety
// As for [`emp_rollout_times`].
enum EmpStatus emp_rollout_final_state(const struct EmpRollout *ro,
                                       double *buf,
                                       size_t cap,
                                       size_t *len_out);

// Actions, row-major (`len × action_dim`).
//
// # Safety
// As for [`emp_rollout_times`].
enum EmpStatus emp_rollout_actions(const struct EmpRollout *ro,
                                   double *buf,
                                   size_t cap,
                                   size_t *len_out);

// Empowerment at each decision point, in nats.
//
// # Safety
// As for [`emp_rollout_times`].
enum EmpStatus emp_rollout_empowerment(const struct EmpRollout *ro,
                                       double *buf,
                                       size_t cap,
                                       size_t *len_out);

// Controlled Lyapunov exponents in 1/s, descending. Unreachable directions
// are reported as `-INFINITY`.
//
// # Safety
// `sys` must be a live handle, `state` must point to `state_len` values,
// `exponents` must hold `cap` values, and `len_out` must be null or
// writable.
enum EmpStatus emp_controlled_lyapunov(const struct EmpSystem *sys,
                                       const double *state,
                                       size_t state_len,
                                       size_t horizon_steps,
                                       double dt,
                                       double *exponents,
                                       size_t cap,
                                       size_t *len_out);

// Water-filling power split over parallel Gaussian channels with the given
// gains, in any order. Writes one power per gain (aligned with `gains`) and
// the resulting capacity in nats.
//
// # Safety
// `gains` must point to `n` values, `powers` must hold `n` values, and
// `out_capacity` must be null or writable.
enum EmpStatus emp_water_fill(const double *gains,
                              size_t n,
                              double power,
                              double *powers,
                              double *out_capacity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMPOWER_H */
