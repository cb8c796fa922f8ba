#ifndef HOPPER_FFI_H
#define HOPPER_FFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define HOPPER_OBS_DIM 44

#define HOPPER_ACT_DIM 8

typedef enum HopperStatus {
  HOPPER_STATUS_OK = 0,
  HOPPER_STATUS_NULL_POINTER = 1,
  // Buffer length does not match the expected dimension.
  HOPPER_STATUS_DIMENSION = 2,
  HOPPER_STATUS_INVALID_CONFIG = 3,
  // Call not allowed in the current state, e.g. stepping a finished episode.
  HOPPER_STATUS_USAGE = 4,
  HOPPER_STATUS_SIMULATION_FAULT = 5,
  HOPPER_STATUS_IO = 6,
  // Malformed or incompatible checkpoint or config text.
  HOPPER_STATUS_MALFORMED = 7,
  HOPPER_STATUS_PANIC = 8,
} HopperStatus;

// Opaque simulation environment.
typedef struct HopperEnv HopperEnv;

// Opaque linear policy.
typedef struct HopperPolicy HopperPolicy;

// Per-step output of [`hopper_env_step`].
typedef struct HopperStepInfo {
  double reward;
  bool terminated;
  bool truncated;
  double leg_tilt_deg;
  double frame_tilt_deg;
  double time_s;
} HopperStepInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failing call on this thread, or NULL if none.
// The pointer stays valid until the next failing call on the same thread.
const char *hopper_last_error_message(void);

// Creates an environment with default model and environment settings.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum HopperStatus hopper_env_new(struct HopperEnv **out);

// Creates an environment from run-config TOML text. Only the `[model]` and
// `[env]` tables affect the environment; other tables are validated and kept.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer.
enum HopperStatus hopper_env_from_config(const char *toml, struct HopperEnv **out);

// Starts a new episode and writes the initial observation.
//
// # Safety
// `env` must come from `hopper_env_new`/`hopper_env_from_config`; `obs` must
// point to `obs_len` writable doubles.
enum HopperStatus hopper_env_reset(struct HopperEnv *env, double *obs, size_t obs_len);

// Applies one action and advances one decision step. `obs` receives the next
// observation; `info` (may be NULL) receives reward and termination flags.
//
// # Safety
// `env` must be a live handle, `action` must point to `action_len` doubles and
// `obs` to `obs_len` writable doubles.
enum HopperStatus hopper_env_step(struct HopperEnv *env,
                                  const double *action,
                                  size_t action_len,
                                  double *obs,
                                  size_t obs_len,
                                  struct HopperStepInfo *info);

// Surviving control steps in the current episode.
//
// # Safety
// `env` must be a live handle and `out` a valid pointer.
enum HopperStatus hopper_env_control_steps(const struct HopperEnv *env, uint64_t *out);

// Releases an environment. NULL is ignored.
//
// # Safety
// `env` must be NULL or a handle not yet freed.
void hopper_env_free(struct HopperEnv *env);

// Loads a JSON checkpoint. When `env` is non-NULL the checkpoint's config hash
// must match the environment's model and action settings.
//
// # Safety
// `path` must be a NUL-terminated string, `env` NULL or a live handle and
// `out` a valid pointer.
enum HopperStatus hopper_policy_load(const char *path,
                                     const struct HopperEnv *env,
                                     struct HopperPolicy **out);

// Creates a zero-weight policy with an empty normalizer.
//
// # Safety
// `out` must be a valid pointer.
enum HopperStatus hopper_policy_zeros(struct HopperPolicy **out);

// Computes `action = W · normalize(obs)`.
//
// # Safety
// `policy` must be a live handle, `obs` must point to `obs_len` doubles and
// `action` to `action_len` writable doubles.
enum HopperStatus hopper_policy_act(const struct HopperPolicy *policy,
                                    const double *obs,
                                    size_t obs_len,
                                    double *action,
                                    size_t action_len);

// Releases a policy. NULL is ignored.
//
// # Safety
// `policy` must be NULL or a handle not yet freed.
void hopper_policy_free(struct HopperPolicy *policy);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOPPER_FFI_H */
