//! Finite-horizon balancing task on top of the hopper model.
//!
//! Actions are per-cable changes of the rest-length target. One `step` call holds
//! the action for `decision_interval` control steps; the tilt criteria are checked
//! and reward (+1 per surviving control step) is accrued after every control step.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{step_physics, WorldState};
use crate::error::{Error, Result};
use crate::model::{Hopper, HopperParams, Observation, ACT_DIM};
use crate::policy::{LinearPolicy, RunningStat};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Episode length cap in control steps.
    pub horizon_steps: u64,
    /// Control steps per second (Hz).
    pub control_rate: f64,
    /// Control steps each action is held for.
    pub decision_interval: u64,
    /// Height of the lowest node at reset (m).
    pub drop_height: f64,
    /// Maximum leg tilt from vertical (degrees).
    pub leg_threshold: f64,
    /// Maximum frame tilt from horizontal (degrees).
    pub frame_threshold: f64,
    /// Rest-length target change per unit action (m).
    pub action_scale: f64,
    pub action_clip: f64,
    pub actuated_mask: [bool; ACT_DIM],
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            horizon_steps: 20_000,
            control_rate: 1000.0,
            decision_interval: 1,
            drop_height: 1.0,
            leg_threshold: 20.0,
            frame_threshold: 40.0,
            action_scale: 0.01,
            action_clip: 1.0,
            actuated_mask: [true; ACT_DIM],
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon_steps == 0 {
            return Err(Error::config("horizon_steps must be >= 1"));
        }
        if self.decision_interval == 0 {
            return Err(Error::config("decision_interval must be >= 1"));
        }
        if !(self.control_rate > 0.0 && self.control_rate.is_finite()) {
            return Err(Error::config("control_rate must be positive"));
        }
        if !(self.leg_threshold > 0.0 && self.frame_threshold > 0.0) {
            return Err(Error::config("tilt thresholds must be positive"));
        }
        if !(self.action_scale > 0.0 && self.action_scale.is_finite()) {
            return Err(Error::config("action_scale must be positive"));
        }
        if !(self.action_clip > 0.0) {
            return Err(Error::config("action_clip must be positive"));
        }
        if !(self.drop_height >= 0.0 && self.drop_height.is_finite()) {
            return Err(Error::config("drop_height must be >= 0"));
        }
        Ok(())
    }

    /// Decisions per second.
    pub fn decision_frequency(&self) -> f64 {
        self.control_rate / self.decision_interval as f64
    }
}

/// Hash of everything a trained policy depends on: the model and the action
/// semantics. Horizon, drop height, decision interval and thresholds are
/// evaluation settings and are excluded.
pub fn config_hash(params: &HopperParams, env: &EnvConfig) -> String {
    #[derive(Serialize)]
    struct Keyed<'a> {
        model: &'a HopperParams,
        control_rate: f64,
        action_scale: f64,
        action_clip: f64,
        actuated_mask: [bool; ACT_DIM],
    }
    let keyed = Keyed {
        model: params,
        control_rate: env.control_rate,
        action_scale: env.action_scale,
        action_clip: env.action_clip,
        actuated_mask: env.actuated_mask,
    };
    let bytes = serde_json::to_vec(&keyed).expect("config serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub leg_tilt: f64,
    pub frame_tilt: f64,
    /// Elapsed episode time, `control_steps / control_rate` (s).
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Running,
    Finished,
}

pub struct HopperEnv {
    hopper: Arc<Hopper>,
    config: EnvConfig,
    world: WorldState,
    control_steps: u64,
    phase: Phase,
}

impl HopperEnv {
    /// Builds the environment and resets it.
    pub fn new(hopper: Arc<Hopper>, config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let world = hopper.world_at_height(config.drop_height)?;
        Ok(Self {
            hopper,
            config,
            world,
            control_steps: 0,
            phase: Phase::Running,
        })
    }

    pub fn hopper(&self) -> &Arc<Hopper> {
        &self.hopper
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    /// Mutable world access, for injecting synthetic poses.
    pub fn world_mut(&mut self) -> &mut WorldState {
        &mut self.world
    }

    /// Surviving control steps so far.
    pub fn control_steps(&self) -> u64 {
        self.control_steps
    }

    pub fn is_finished(&self) -> bool {
        self.phase == Phase::Finished
    }

    pub fn reset(&mut self) -> Result<Observation> {
        self.hopper.set_initial_drop(&mut self.world, self.config.drop_height)?;
        self.control_steps = 0;
        self.phase = Phase::Running;
        Ok(self.observation())
    }

    pub fn observation(&self) -> Observation {
        self.hopper.observation(&self.world)
    }

    pub fn info(&self) -> StepInfo {
        StepInfo {
            leg_tilt: self.hopper.leg_tilt(&self.world),
            frame_tilt: self.hopper.frame_tilt(&self.world),
            time: self.control_steps as f64 / self.config.control_rate,
        }
    }

    /// Whether the current pose satisfies both tilt criteria.
    pub fn criteria_hold(&self) -> bool {
        self.hopper.leg_tilt(&self.world) <= self.config.leg_threshold
            && self.hopper.frame_tilt(&self.world) <= self.config.frame_threshold
    }

    /// Adds the clipped, masked and scaled action to each cable's rest-length target.
    fn apply_action(&mut self, action: &[f64]) {
        let clip = self.config.action_clip;
        for (cable, (&a, &actuated)) in action.iter().zip(&self.config.actuated_mask).enumerate() {
            if !actuated {
                continue;
            }
            let delta = a.clamp(-clip, clip) * self.config.action_scale;
            let target = self.world.cables()[cable].rest_length_target() + delta;
            self.world.set_rest_length_target(cable, target);
        }
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.phase == Phase::Finished {
            return Err(Error::usage("step called on a finished episode; reset first"));
        }
        if action.len() != ACT_DIM {
            return Err(Error::Dimension {
                what: "action",
                expected: ACT_DIM,
                actual: action.len(),
            });
        }
        if let Some(bad) = action.iter().position(|a| a.is_nan()) {
            return Err(Error::usage(format!("action component {bad} is NaN")));
        }
        self.apply_action(action);

        let control_dt = 1.0 / self.config.control_rate;
        let substeps = self.hopper.params().substeps;
        let mut reward = 0.0;
        let mut terminated = false;
        let mut truncated = false;
        for _ in 0..self.config.decision_interval {
            if let Err(err) = step_physics(&mut self.world, control_dt, substeps) {
                self.phase = Phase::Finished;
                return Err(err);
            }
            if !self.criteria_hold() {
                terminated = true;
                break;
            }
            reward += 1.0;
            self.control_steps += 1;
            if self.control_steps >= self.config.horizon_steps {
                truncated = true;
                break;
            }
        }
        if terminated || truncated {
            self.phase = Phase::Finished;
        }
        Ok(StepResult {
            observation: self.observation(),
            reward,
            terminated,
            truncated,
            info: self.info(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeResult {
    pub total_reward: f64,
    /// Surviving control steps.
    pub control_steps: u64,
    pub seconds: f64,
}

/// Whether visited observations feed normalization statistics.
pub enum RolloutMode<'a> {
    Train(&'a mut RunningStat),
    Eval,
}

/// Runs one episode from reset until termination or truncation.
pub fn rollout(policy: &LinearPolicy, env: &mut HopperEnv, mut mode: RolloutMode<'_>) -> Result<EpisodeResult> {
    rollout_with(policy, env, &mut mode, |_, _| {})
}

/// [`rollout`] with a callback invoked after reset and after every `step` call.
pub fn rollout_with<F>(
    policy: &LinearPolicy,
    env: &mut HopperEnv,
    mode: &mut RolloutMode<'_>,
    mut on_step: F,
) -> Result<EpisodeResult>
where
    F: FnMut(&HopperEnv, Option<&StepResult>),
{
    if policy.obs_dim() != crate::model::OBS_DIM || policy.act_dim() != ACT_DIM {
        return Err(Error::Dimension {
            what: "policy shape (obs x act)",
            expected: crate::model::OBS_DIM * ACT_DIM,
            actual: policy.obs_dim() * policy.act_dim(),
        });
    }
    let mut obs = env.reset()?;
    on_step(env, None);
    let mut action = vec![0.0; ACT_DIM];
    let mut total_reward = 0.0;
    loop {
        if let RolloutMode::Train(stats) = mode {
            stats.push(obs.as_slice());
        }
        policy.act_into(obs.as_slice(), &mut action)?;
        let result = env.step(&action)?;
        total_reward += result.reward;
        on_step(env, Some(&result));
        if result.terminated || result.truncated {
            break;
        }
        obs = result.observation;
    }
    let control_steps = env.control_steps();
    Ok(EpisodeResult {
        total_reward,
        control_steps,
        seconds: control_steps as f64 / env.config().control_rate,
    })
}
