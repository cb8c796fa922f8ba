//! Augmented Random Search over linear policy weights.
//!
//! Each iteration samples `N` Gaussian directions `δᵢ`, evaluates the policy at
//! `θ ± ν δᵢ`, keeps the `b` directions with the largest `max(r⁺, r⁻)` and steps
//!
//! ```text
//! θ' = θ + α / (b σ_R) · Σ_top-b (r⁺ᵢ − r⁻ᵢ) δᵢ
//! ```
//!
//! where `σ_R` is the standard deviation of the `2b` selected rewards. The `-t`
//! variants use top-`b` selection (otherwise all `N` directions are used); the
//! `V2` variants normalize observations with statistics gathered during training.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::EpisodeResult;
use crate::error::{Error, Result};
use crate::policy::{LinearPolicy, RunningStat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    V1,
    V2,
    #[serde(rename = "V1-t")]
    V1T,
    #[serde(rename = "V2-t")]
    V2T,
}

impl Variant {
    pub fn normalizes(self) -> bool {
        matches!(self, Variant::V2 | Variant::V2T)
    }

    pub fn selects_top(self) -> bool {
        matches!(self, Variant::V1T | Variant::V2T)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArsConfig {
    pub step_size: f64,
    pub num_directions: usize,
    pub perturbation_std: f64,
    pub top_directions: usize,
    pub iterations: usize,
    pub seed: u64,
    pub variant: Variant,
    /// Run a frozen-statistics evaluation every this many iterations (0 = never).
    pub eval_every: usize,
    pub workers: usize,
    /// Abort when more than this fraction of an iteration's rollouts fault.
    pub max_fault_rate: f64,
    /// When false, the wall-clock column is written as 0 so logs are reproducible byte for byte.
    pub record_wall_clock: bool,
}

impl Default for ArsConfig {
    fn default() -> Self {
        Self {
            step_size: 0.02,
            num_directions: 16,
            perturbation_std: 0.03,
            top_directions: 8,
            iterations: 1000,
            seed: 0,
            variant: Variant::V2T,
            eval_every: 1,
            workers: 1,
            max_fault_rate: 0.5,
            record_wall_clock: true,
        }
    }
}

impl ArsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::config("step_size must be > 0"));
        }
        if !(self.perturbation_std > 0.0 && self.perturbation_std.is_finite()) {
            return Err(Error::config("perturbation_std must be > 0"));
        }
        if self.num_directions == 0 {
            return Err(Error::config("num_directions must be >= 1"));
        }
        if self.top_directions == 0 || self.top_directions > self.num_directions {
            return Err(Error::config(format!(
                "top_directions must be in 1..={}, got {}",
                self.num_directions, self.top_directions
            )));
        }
        if self.workers == 0 {
            return Err(Error::config("workers must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.max_fault_rate) {
            return Err(Error::config("max_fault_rate must be in [0, 1]"));
        }
        Ok(())
    }

    /// Number of directions that enter the update.
    pub fn effective_top(&self) -> usize {
        if self.variant.selects_top() {
            self.top_directions
        } else {
            self.num_directions
        }
    }
}

/// Something a linear policy can be scored on.
pub trait Task: Sync {
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;

    /// One training rollout. Visited observations go into `stats` when given.
    fn rollout(&self, policy: &LinearPolicy, stats: Option<&mut RunningStat>) -> Result<EpisodeResult>;

    /// One evaluation rollout with frozen statistics.
    fn evaluate(&self, policy: &LinearPolicy) -> Result<EpisodeResult> {
        self.rollout(policy, None)
    }
}

/// `n` standard-normal matrices, drawn direction-major then row-major.
pub fn sample_directions<R: rand::Rng>(rng: &mut R, n: usize, rows: usize, cols: usize) -> Vec<DMatrix<f64>> {
    (0..n)
        .map(|_| {
            let entries: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
            DMatrix::from_row_slice(rows, cols, &entries)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectionResult {
    /// Sampling index; breaks ranking ties.
    pub index: usize,
    pub direction: DMatrix<f64>,
    pub reward_plus: f64,
    pub reward_minus: f64,
}

/// Applies one ARS step. The update is independent of the order of `results`.
pub fn ars_update(theta: &DMatrix<f64>, results: &[DirectionResult], config: &ArsConfig) -> Result<DMatrix<f64>> {
    if results.is_empty() {
        return Err(Error::usage("ars_update needs at least one direction result"));
    }
    let top = config.effective_top().min(results.len());

    let mut ranked: Vec<&DirectionResult> = results.iter().collect();
    ranked.sort_by(|a, b| {
        let ka = a.reward_plus.max(a.reward_minus);
        let kb = b.reward_plus.max(b.reward_minus);
        kb.total_cmp(&ka).then(a.index.cmp(&b.index))
    });
    let selected = &ranked[..top];

    let rewards: Vec<f64> = selected
        .iter()
        .flat_map(|r| [r.reward_plus, r.reward_minus])
        .collect();
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    let sigma = (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / rewards.len() as f64).sqrt();
    if !(sigma >= 1e-12) {
        return Ok(theta.clone());
    }

    let mut step = DMatrix::zeros(theta.nrows(), theta.ncols());
    for r in selected {
        if r.direction.shape() != theta.shape() {
            return Err(Error::Dimension {
                what: "direction entries",
                expected: theta.len(),
                actual: r.direction.len(),
            });
        }
        step += &r.direction * (r.reward_plus - r.reward_minus);
    }
    Ok(theta + step * (config.step_size / (top as f64 * sigma)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Cumulative episodes: `2N` update rollouts per iteration plus evaluations.
    pub episodes: u64,
    pub mean_return: f64,
    pub min_return: f64,
    pub max_return: f64,
    pub eval_seconds: Option<f64>,
    pub wall_clock_s: f64,
    pub faults: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<IterationRecord>,
}

impl TrainingLog {
    pub fn total_faults(&self) -> usize {
        self.records.iter().map(|r| r.faults).sum()
    }
}

struct RolloutOutcome {
    reward: f64,
    stats: Option<RunningStat>,
    faulted: bool,
}

/// Trains from zero weights. `on_record` sees each iteration record as it is produced.
pub fn train<T, F>(task: &T, config: &ArsConfig, mut on_record: F) -> Result<(LinearPolicy, TrainingLog)>
where
    T: Task,
    F: FnMut(&IterationRecord) -> Result<()>,
{
    config.validate()?;
    let (rows, cols) = (task.act_dim(), task.obs_dim());
    let mut policy = LinearPolicy::zeros(rows, cols);
    let mut log = TrainingLog::default();
    if config.iterations == 0 {
        return Ok((policy, log));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let started = Instant::now();
    let n = config.num_directions;
    let nu = config.perturbation_std;
    let normalize = config.variant.normalizes();
    let mut evaluations = 0u64;

    for iteration in 0..config.iterations {
        let directions = sample_directions(&mut rng, n, rows, cols);
        let base = &policy;
        let outcomes: Vec<Result<RolloutOutcome>> = pool.install(|| {
            (0..2 * n)
                .into_par_iter()
                .map(|j| {
                    let sign = if j % 2 == 0 { nu } else { -nu };
                    let candidate = base.perturbed(base.weights() + &directions[j / 2] * sign);
                    let mut stats = normalize.then(|| RunningStat::new(cols));
                    match task.rollout(&candidate, stats.as_mut()) {
                        Ok(result) => Ok(RolloutOutcome {
                            reward: result.total_reward,
                            stats,
                            faulted: false,
                        }),
                        Err(Error::SimulationFault { .. }) => Ok(RolloutOutcome {
                            reward: 0.0,
                            stats: None,
                            faulted: true,
                        }),
                        Err(other) => Err(other),
                    }
                })
                .collect()
        });
        let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

        let faults = outcomes.iter().filter(|o| o.faulted).count();
        if faults as f64 > config.max_fault_rate * (2 * n) as f64 {
            return Err(Error::FaultRate {
                iteration,
                faults,
                rollouts: 2 * n,
            });
        }

        let results: Vec<DirectionResult> = directions
            .into_iter()
            .enumerate()
            .map(|(i, direction)| DirectionResult {
                index: i,
                direction,
                reward_plus: outcomes[2 * i].reward,
                reward_minus: outcomes[2 * i + 1].reward,
            })
            .collect();
        let updated = ars_update(policy.weights(), &results, config)?;
        policy.set_weights(updated)?;
        for stats in outcomes.iter().filter_map(|o| o.stats.as_ref()) {
            policy.merge_stats(stats);
        }

        let eval_seconds = if config.eval_every > 0 && (iteration + 1) % config.eval_every == 0 {
            evaluations += 1;
            match task.evaluate(&policy) {
                Ok(result) => Some(result.seconds),
                Err(Error::SimulationFault { .. }) => Some(0.0),
                Err(e) => return Err(e),
            }
        } else {
            None
        };

        let returns: Vec<f64> = outcomes.iter().map(|o| o.reward).collect();
        let record = IterationRecord {
            iteration: iteration + 1,
            episodes: (2 * n * (iteration + 1)) as u64 + evaluations,
            mean_return: returns.iter().sum::<f64>() / returns.len() as f64,
            min_return: returns.iter().copied().fold(f64::INFINITY, f64::min),
            max_return: returns.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            eval_seconds,
            wall_clock_s: if config.record_wall_clock {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
            faults,
        };
        on_record(&record)?;
        log.records.push(record);
    }
    Ok((policy, log))
}

/// Synthetic objective `−‖W − W*‖²_F`, used to check the optimizer against a
/// known optimum. Observation statistics are not used.
#[derive(Clone, Debug)]
pub struct QuadraticTask {
    pub target: DMatrix<f64>,
}

impl Task for QuadraticTask {
    fn obs_dim(&self) -> usize {
        self.target.ncols()
    }

    fn act_dim(&self) -> usize {
        self.target.nrows()
    }

    fn rollout(&self, policy: &LinearPolicy, _stats: Option<&mut RunningStat>) -> Result<EpisodeResult> {
        let value = -(policy.weights() - &self.target).norm_squared();
        Ok(EpisodeResult {
            total_reward: value,
            control_steps: 0,
            seconds: 0.0,
        })
    }
}
