//! C ABI over `hopper-core`: an opaque environment handle, an opaque policy
//! handle and integer status codes. The generated header lives in
//! `include/hopper.h`.
//!
//! Every function returns a [`HopperStatus`]. On failure a message describing
//! the error is kept per thread and can be read with
//! [`hopper_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use hopper_core::env::HopperEnv as Env;
use hopper_core::harness::{load_policy, RunConfig};
use hopper_core::model::{ACT_DIM, OBS_DIM};
use hopper_core::policy::LinearPolicy;
use hopper_core::Error;

pub const HOPPER_OBS_DIM: usize = 44;
pub const HOPPER_ACT_DIM: usize = 8;
const _: () = assert!(HOPPER_OBS_DIM == OBS_DIM && HOPPER_ACT_DIM == ACT_DIM);

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HopperStatus {
    Ok = 0,
    NullPointer = 1,
    /// Buffer length does not match the expected dimension.
    Dimension = 2,
    InvalidConfig = 3,
    /// Call not allowed in the current state, e.g. stepping a finished episode.
    Usage = 4,
    SimulationFault = 5,
    Io = 6,
    /// Malformed or incompatible checkpoint or config text.
    Malformed = 7,
    Panic = 8,
}

/// Per-step output of [`hopper_env_step`].
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HopperStepInfo {
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub leg_tilt_deg: f64,
    pub frame_tilt_deg: f64,
    pub time_s: f64,
}

/// Opaque simulation environment.
pub struct HopperEnv {
    config: RunConfig,
    env: Env,
}

/// Opaque linear policy.
pub struct HopperPolicy {
    policy: LinearPolicy,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> HopperStatus {
    match err {
        Error::Config(_) => HopperStatus::InvalidConfig,
        Error::Usage(_) => HopperStatus::Usage,
        Error::SimulationFault { .. } | Error::FaultRate { .. } => HopperStatus::SimulationFault,
        Error::Dimension { .. } => HopperStatus::Dimension,
        Error::Version { .. } | Error::ConfigHash { .. } | Error::Malformed { .. } => HopperStatus::Malformed,
        Error::Io { .. } => HopperStatus::Io,
    }
}

struct Failure(HopperStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HopperStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HopperStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside hopper library".into());
            HopperStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(HopperStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, expected: usize, what: &str) -> Result<&'a [T], Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    if len != expected {
        return Err(Failure(
            HopperStatus::Dimension,
            format!("{what}: expected length {expected}, got {len}"),
        ));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, expected: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    if len != expected {
        return Err(Failure(
            HopperStatus::Dimension,
            format!("{what}: expected length {expected}, got {len}"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn c_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure(HopperStatus::Malformed, format!("{what} is not valid UTF-8")))
}

fn build_env(config: RunConfig) -> Result<Box<HopperEnv>, Failure> {
    let env = Env::new(config.hopper()?, config.env.clone())?;
    Ok(Box::new(HopperEnv { config, env }))
}

/// Message for the most recent failing call on this thread, or NULL if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hopper_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Creates an environment with default model and environment settings.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn hopper_env_new(out: *mut *mut HopperEnv) -> HopperStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(build_env(RunConfig::default())?);
        Ok(())
    })
}

/// Creates an environment from run-config TOML text. Only the `[model]` and
/// `[env]` tables affect the environment; other tables are validated and kept.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hopper_env_from_config(toml: *const c_char, out: *mut *mut HopperEnv) -> HopperStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = RunConfig::from_toml(c_str(toml, "toml")?)?;
        *out = Box::into_raw(build_env(config)?);
        Ok(())
    })
}

/// Starts a new episode and writes the initial observation.
///
/// # Safety
/// `env` must come from `hopper_env_new`/`hopper_env_from_config`; `obs` must
/// point to `obs_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hopper_env_reset(env: *mut HopperEnv, obs: *mut f64, obs_len: usize) -> HopperStatus {
    guard(|| {
        let env = env.as_mut().ok_or_else(|| null("env"))?;
        let obs = slice_mut(obs, obs_len, OBS_DIM, "obs")?;
        let observation = env.env.reset()?;
        obs.copy_from_slice(observation.as_slice());
        Ok(())
    })
}

/// Applies one action and advances one decision step. `obs` receives the next
/// observation; `info` (may be NULL) receives reward and termination flags.
///
/// # Safety
/// `env` must be a live handle, `action` must point to `action_len` doubles and
/// `obs` to `obs_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hopper_env_step(
    env: *mut HopperEnv,
    action: *const f64,
    action_len: usize,
    obs: *mut f64,
    obs_len: usize,
    info: *mut HopperStepInfo,
) -> HopperStatus {
    guard(|| {
        let env = env.as_mut().ok_or_else(|| null("env"))?;
        let action = slice(action, action_len, ACT_DIM, "action")?;
        let obs = slice_mut(obs, obs_len, OBS_DIM, "obs")?;
        let result = env.env.step(action)?;
        obs.copy_from_slice(result.observation.as_slice());
        if let Some(info) = info.as_mut() {
            *info = HopperStepInfo {
                reward: result.reward,
                terminated: result.terminated,
                truncated: result.truncated,
                leg_tilt_deg: result.info.leg_tilt,
                frame_tilt_deg: result.info.frame_tilt,
                time_s: result.info.time,
            };
        }
        Ok(())
    })
}

/// Surviving control steps in the current episode.
///
/// # Safety
/// `env` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hopper_env_control_steps(env: *const HopperEnv, out: *mut u64) -> HopperStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = env.env.control_steps();
        Ok(())
    })
}

/// Releases an environment. NULL is ignored.
///
/// # Safety
/// `env` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hopper_env_free(env: *mut HopperEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Loads a JSON checkpoint. When `env` is non-NULL the checkpoint's config hash
/// must match the environment's model and action settings.
///
/// # Safety
/// `path` must be a NUL-terminated string, `env` NULL or a live handle and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hopper_policy_load(
    path: *const c_char,
    env: *const HopperEnv,
    out: *mut *mut HopperPolicy,
) -> HopperStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = Path::new(c_str(path, "path")?);
        let policy = match env.as_ref() {
            Some(env) => load_policy(&env.config, path)?,
            None => hopper_core::policy::load_checkpoint(path)?.into_policy(OBS_DIM, ACT_DIM, None)?,
        };
        *out = Box::into_raw(Box::new(HopperPolicy { policy }));
        Ok(())
    })
}

/// Creates a zero-weight policy with an empty normalizer.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hopper_policy_zeros(out: *mut *mut HopperPolicy) -> HopperStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let policy = LinearPolicy::zeros(ACT_DIM, OBS_DIM);
        *out = Box::into_raw(Box::new(HopperPolicy { policy }));
        Ok(())
    })
}

/// Computes `action = W · normalize(obs)`.
///
/// # Safety
/// `policy` must be a live handle, `obs` must point to `obs_len` doubles and
/// `action` to `action_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hopper_policy_act(
    policy: *const HopperPolicy,
    obs: *const f64,
    obs_len: usize,
    action: *mut f64,
    action_len: usize,
) -> HopperStatus {
    guard(|| {
        let policy = policy.as_ref().ok_or_else(|| null("policy"))?;
        let obs = slice(obs, obs_len, OBS_DIM, "obs")?;
        let action = slice_mut(action, action_len, ACT_DIM, "action")?;
        policy.policy.act_into(obs, action)?;
        Ok(())
    })
}

/// Releases a policy. NULL is ignored.
///
/// # Safety
/// `policy` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hopper_policy_free(policy: *mut HopperPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}
