//! Experiment protocols: training, evaluation sweeps over drop height and
//! decision frequency, long-horizon survival and trajectory export.
//!
//! Every command writes the fully resolved [`RunConfig`] next to its outputs as
//! `config.toml`; feeding that file back reproduces the outputs.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ars::{self, ArsConfig, IterationRecord, Task, TrainingLog};
use crate::env::{self, config_hash, EnvConfig, EpisodeResult, HopperEnv, RolloutMode};
use crate::error::{Error, Result};
use crate::model::{Hopper, HopperParams, ACT_DIM, NUM_CABLES, NUM_NODES, OBS_DIM};
use crate::policy::{load_checkpoint, save_checkpoint, LinearPolicy, RunningStat};

pub const TRAINING_CSV: &str = "training.csv";
pub const CHECKPOINT_FILE: &str = "policy.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const EVAL_CSV: &str = "eval.csv";
pub const SWEEP_HEIGHT_CSV: &str = "sweep_height.csv";
pub const SWEEP_FREQUENCY_CSV: &str = "sweep_frequency.csv";
pub const LONG_HORIZON_CSV: &str = "long_horizon.csv";
pub const TRAJECTORY_CSV: &str = "trajectory.csv";

pub const TRAINING_HEADER: [&str; 7] = [
    "iteration",
    "episodes",
    "mean_return",
    "min_return",
    "max_return",
    "eval_seconds",
    "wall_clock_s",
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    #[default]
    Train,
    Eval,
    SweepHeight,
    SweepFrequency,
    LongHorizon,
    ExportTrajectory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub heights: Vec<f64>,
    pub decision_intervals: Vec<u64>,
    pub repeats: usize,
    pub long_horizon_seconds: f64,
    pub trajectory_height: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            heights: vec![0.0, 0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5],
            // 1000, 500, 333, 250, 200 and 100 Hz at the default control rate
            decision_intervals: vec![1, 2, 3, 4, 5, 10],
            repeats: 10,
            long_horizon_seconds: 600.0,
            trajectory_height: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub output_dir: PathBuf,
    pub model: HopperParams,
    pub env: EnvConfig,
    pub ars: ArsConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Train,
            output_dir: PathBuf::from("runs/latest"),
            model: HopperParams::default(),
            env: EnvConfig::default(),
            ars: ArsConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Malformed {
            what: "run config",
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn config_hash(&self) -> String {
        config_hash(&self.model, &self.env)
    }

    pub fn hopper(&self) -> Result<Arc<Hopper>> {
        Ok(Arc::new(Hopper::build(self.model.clone())?))
    }

    fn write_resolved(&self, experiment: Experiment, out: &Path) -> Result<()> {
        let resolved = RunConfig {
            experiment,
            output_dir: out.to_path_buf(),
            ..self.clone()
        };
        write_file(&out.join(CONFIG_FILE), &resolved.to_toml())
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn prepare_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

/// The hopper balancing task as seen by the optimizer: one fresh environment per rollout.
pub struct HopperTask {
    hopper: Arc<Hopper>,
    env: EnvConfig,
}

impl HopperTask {
    pub fn new(hopper: Arc<Hopper>, env: EnvConfig) -> Result<Self> {
        env.validate()?;
        Ok(Self { hopper, env })
    }

    pub fn episode(&self, policy: &LinearPolicy, env_config: &EnvConfig) -> Result<EpisodeResult> {
        let mut env = HopperEnv::new(Arc::clone(&self.hopper), env_config.clone())?;
        env::rollout(policy, &mut env, RolloutMode::Eval)
    }
}

impl Task for HopperTask {
    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn act_dim(&self) -> usize {
        ACT_DIM
    }

    fn rollout(&self, policy: &LinearPolicy, stats: Option<&mut RunningStat>) -> Result<EpisodeResult> {
        let mut env = HopperEnv::new(Arc::clone(&self.hopper), self.env.clone())?;
        let mode = match stats {
            Some(stats) => RolloutMode::Train(stats),
            None => RolloutMode::Eval,
        };
        env::rollout(policy, &mut env, mode)
    }
}

/// Shortest decimal representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl CsvOut {
    fn create(path: PathBuf, header: &[&str]) -> Result<Self> {
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(file);
        let mut out = Self { path, writer };
        out.row(header.iter().map(|s| s.to_string()))?;
        Ok(out)
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<()> {
        let fields: Vec<String> = fields.into_iter().collect();
        self.writer.write_record(&fields).map_err(|e| self.err(e))
    }

    fn err(&self, e: csv::Error) -> Error {
        let source = match e.into_kind() {
            csv::ErrorKind::Io(io) => io,
            other => std::io::Error::other(format!("{other:?}")),
        };
        Error::io(&self.path, source)
    }

    fn finish(mut self) -> Result<()> {
        self.writer
            .flush()
            .map_err(|e| Error::io(&self.path, e))
    }
}

fn training_row(r: &IterationRecord) -> Vec<String> {
    vec![
        r.iteration.to_string(),
        r.episodes.to_string(),
        fmt_f64(r.mean_return),
        fmt_f64(r.min_return),
        fmt_f64(r.max_return),
        r.eval_seconds.map(fmt_f64).unwrap_or_default(),
        fmt_f64(r.wall_clock_s),
    ]
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub policy: LinearPolicy,
    pub log: TrainingLog,
    pub checkpoint: PathBuf,
    pub training_csv: PathBuf,
}

/// Runs ARS training and writes `training.csv`, `policy.json` and `config.toml` to `out`.
pub fn cmd_train(config: &RunConfig, out: &Path) -> Result<TrainOutcome> {
    prepare_dir(out)?;
    config.write_resolved(Experiment::Train, out)?;
    let task = HopperTask::new(config.hopper()?, config.env.clone())?;

    let training_csv = out.join(TRAINING_CSV);
    let mut csv = CsvOut::create(training_csv.clone(), &TRAINING_HEADER)?;
    let (policy, log) = ars::train(&task, &config.ars, |record| {
        csv.row(training_row(record))?;
        csv.writer.flush().map_err(|e| Error::io(&csv.path, e))
    })?;
    csv.finish()?;

    let checkpoint = out.join(CHECKPOINT_FILE);
    save_checkpoint(&policy, &config.config_hash(), &checkpoint)?;
    Ok(TrainOutcome {
        policy,
        log,
        checkpoint,
        training_csv,
    })
}

/// Loads a checkpoint and checks it against the model and action settings of `config`.
pub fn load_policy(config: &RunConfig, path: &Path) -> Result<LinearPolicy> {
    load_checkpoint(path)?.into_policy(OBS_DIM, ACT_DIM, Some(&config.config_hash()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    /// Drop height (m) or decision frequency (Hz).
    pub value: f64,
    pub decision_interval: u64,
    pub repeats: usize,
    pub mean_seconds: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
    pub success_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub parameter: &'static str,
    pub rows: Vec<SweepRow>,
}

fn run_repeats(
    task: &HopperTask,
    policy: &LinearPolicy,
    env_config: &EnvConfig,
    repeats: usize,
    workers: usize,
) -> Result<Vec<EpisodeResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        (0..repeats)
            .into_par_iter()
            .map(|_| match task.episode(policy, env_config) {
                // a faulted episode counts as zero survival
                Err(Error::SimulationFault { .. }) => Ok(EpisodeResult {
                    total_reward: 0.0,
                    control_steps: 0,
                    seconds: 0.0,
                }),
                other => other,
            })
            .collect()
    })
}

fn aggregate(value: f64, decision_interval: u64, horizon: u64, episodes: &[EpisodeResult]) -> SweepRow {
    let seconds: Vec<f64> = episodes.iter().map(|e| e.seconds).collect();
    SweepRow {
        value,
        decision_interval,
        repeats: episodes.len(),
        mean_seconds: seconds.iter().sum::<f64>() / seconds.len() as f64,
        min_seconds: seconds.iter().copied().fold(f64::INFINITY, f64::min),
        max_seconds: seconds.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        success_count: episodes.iter().filter(|e| e.control_steps >= horizon).count(),
    }
}

fn validate_repeats(repeats: usize) -> Result<()> {
    if repeats == 0 {
        return Err(Error::config("repeats must be >= 1"));
    }
    Ok(())
}

fn write_sweep(table: &SweepTable, path: PathBuf) -> Result<()> {
    let with_interval = table.parameter == "frequency_hz";
    let mut header = vec![table.parameter];
    if with_interval {
        header.push("decision_interval");
    }
    header.extend(["repeats", "mean_seconds", "min_seconds", "max_seconds", "success_count"]);
    let mut csv = CsvOut::create(path, &header)?;
    for row in &table.rows {
        let mut fields = vec![fmt_f64(row.value)];
        if with_interval {
            fields.push(row.decision_interval.to_string());
        }
        fields.extend([
            row.repeats.to_string(),
            fmt_f64(row.mean_seconds),
            fmt_f64(row.min_seconds),
            fmt_f64(row.max_seconds),
            row.success_count.to_string(),
        ]);
        csv.row(fields)?;
    }
    csv.finish()
}

/// Frozen-policy evaluation from each drop height.
pub fn sweep_height(config: &RunConfig, policy: &LinearPolicy, heights: &[f64], repeats: usize) -> Result<SweepTable> {
    validate_repeats(repeats)?;
    let task = HopperTask::new(config.hopper()?, config.env.clone())?;
    let rows = heights
        .iter()
        .map(|&height| {
            let env_config = EnvConfig {
                drop_height: height,
                ..config.env.clone()
            };
            env_config.validate()?;
            let episodes = run_repeats(&task, policy, &env_config, repeats, config.ars.workers)?;
            Ok(aggregate(height, env_config.decision_interval, env_config.horizon_steps, &episodes))
        })
        .collect::<Result<_>>()?;
    Ok(SweepTable {
        parameter: "height_m",
        rows,
    })
}

/// Frozen-policy evaluation holding each action for `k` control steps.
pub fn sweep_frequency(
    config: &RunConfig,
    policy: &LinearPolicy,
    decision_intervals: &[u64],
    repeats: usize,
) -> Result<SweepTable> {
    validate_repeats(repeats)?;
    let task = HopperTask::new(config.hopper()?, config.env.clone())?;
    let rows = decision_intervals
        .iter()
        .map(|&k| {
            let env_config = EnvConfig {
                decision_interval: k,
                ..config.env.clone()
            };
            env_config.validate()?;
            let episodes = run_repeats(&task, policy, &env_config, repeats, config.ars.workers)?;
            Ok(aggregate(env_config.decision_frequency(), k, env_config.horizon_steps, &episodes))
        })
        .collect::<Result<_>>()?;
    Ok(SweepTable {
        parameter: "frequency_hz",
        rows,
    })
}

pub fn cmd_eval(config: &RunConfig, checkpoint: &Path, out: &Path) -> Result<SweepTable> {
    let policy = load_policy(config, checkpoint)?;
    prepare_dir(out)?;
    config.write_resolved(Experiment::Eval, out)?;
    let table = sweep_height(config, &policy, &[config.env.drop_height], config.sweep.repeats)?;
    write_sweep(&table, out.join(EVAL_CSV))?;
    Ok(table)
}

pub fn cmd_sweep_height(config: &RunConfig, checkpoint: &Path, out: &Path) -> Result<SweepTable> {
    let policy = load_policy(config, checkpoint)?;
    prepare_dir(out)?;
    config.write_resolved(Experiment::SweepHeight, out)?;
    let table = sweep_height(config, &policy, &config.sweep.heights, config.sweep.repeats)?;
    write_sweep(&table, out.join(SWEEP_HEIGHT_CSV))?;
    Ok(table)
}

pub fn cmd_sweep_frequency(config: &RunConfig, checkpoint: &Path, out: &Path) -> Result<SweepTable> {
    let policy = load_policy(config, checkpoint)?;
    prepare_dir(out)?;
    config.write_resolved(Experiment::SweepFrequency, out)?;
    let table = sweep_frequency(config, &policy, &config.sweep.decision_intervals, config.sweep.repeats)?;
    write_sweep(&table, out.join(SWEEP_FREQUENCY_CSV))?;
    Ok(table)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LongHorizonOutcome {
    pub duration_s: f64,
    pub survived_s: f64,
}

impl LongHorizonOutcome {
    pub fn succeeded(&self) -> bool {
        self.survived_s >= self.duration_s
    }
}

/// One evaluation episode with the horizon stretched to `duration_s`.
pub fn long_horizon(config: &RunConfig, policy: &LinearPolicy, duration_s: f64) -> Result<LongHorizonOutcome> {
    if !(duration_s >= 0.0 && duration_s.is_finite()) {
        return Err(Error::config(format!("duration must be >= 0, got {duration_s}")));
    }
    let steps = (duration_s * config.env.control_rate).round() as u64;
    if steps == 0 {
        return Ok(LongHorizonOutcome {
            duration_s,
            survived_s: 0.0,
        });
    }
    let env_config = EnvConfig {
        horizon_steps: steps,
        ..config.env.clone()
    };
    let task = HopperTask::new(config.hopper()?, env_config.clone())?;
    let survived_s = match task.episode(policy, &env_config) {
        Ok(result) => result.seconds,
        Err(Error::SimulationFault { .. }) => 0.0,
        Err(e) => return Err(e),
    };
    Ok(LongHorizonOutcome {
        duration_s,
        survived_s,
    })
}

pub fn cmd_long_horizon(config: &RunConfig, checkpoint: &Path, out: &Path) -> Result<LongHorizonOutcome> {
    let policy = load_policy(config, checkpoint)?;
    prepare_dir(out)?;
    config.write_resolved(Experiment::LongHorizon, out)?;
    let outcome = long_horizon(config, &policy, config.sweep.long_horizon_seconds)?;
    let mut csv = CsvOut::create(out.join(LONG_HORIZON_CSV), &["duration_s", "survived_s", "success"])?;
    csv.row([
        fmt_f64(outcome.duration_s),
        fmt_f64(outcome.survived_s),
        u8::from(outcome.succeeded()).to_string(),
    ])?;
    csv.finish()?;
    Ok(outcome)
}

pub fn trajectory_header() -> Vec<String> {
    let mut header = vec!["time".to_string()];
    for node in 0..NUM_NODES {
        header.extend(["x", "y", "z"].map(|a| format!("node{node}_{a}")));
    }
    for node in 0..NUM_NODES {
        header.extend(["vx", "vy", "vz"].map(|a| format!("node{node}_{a}")));
    }
    header.extend((0..NUM_CABLES).map(|c| format!("cable{c}_length")));
    header.extend((0..NUM_CABLES).map(|c| format!("cable{c}_target")));
    header.extend(["leg_tilt_deg", "frame_tilt_deg", "reward"].map(String::from));
    header
}

fn trajectory_row(env: &HopperEnv, rewarded: bool) -> Vec<String> {
    let obs = env.observation();
    let info = env.info();
    let mut row = vec![fmt_f64(info.time)];
    row.extend(obs.node_positions().iter().map(|v| fmt_f64(*v)));
    row.extend(obs.node_velocities().iter().map(|v| fmt_f64(*v)));
    row.extend(obs.cable_lengths().iter().map(|v| fmt_f64(*v)));
    row.extend(env.world().cables().iter().map(|c| fmt_f64(c.rest_length_target())));
    row.extend([fmt_f64(info.leg_tilt), fmt_f64(info.frame_tilt), u8::from(rewarded).to_string()]);
    row
}

/// One evaluation episode from `height`, one row per surviving control step plus
/// the initial state. Held actions are replayed step by step, which is equivalent
/// to stepping with the configured decision interval.
pub fn export_trajectory(config: &RunConfig, policy: &LinearPolicy, height: f64, path: &Path) -> Result<EpisodeResult> {
    let k = config.env.decision_interval;
    let env_config = EnvConfig {
        drop_height: height,
        decision_interval: 1,
        ..config.env.clone()
    };
    let mut env = HopperEnv::new(config.hopper()?, env_config)?;
    let header = trajectory_header();
    let mut csv = CsvOut::create(path.to_path_buf(), &header.iter().map(String::as_str).collect::<Vec<_>>())?;

    let mut obs = env.reset()?;
    csv.row(trajectory_row(&env, false))?;
    let mut action = vec![0.0; ACT_DIM];
    let zero = vec![0.0; ACT_DIM];
    let mut step = 0u64;
    let mut total_reward = 0.0;
    loop {
        let result = if step % k == 0 {
            policy.act_into(obs.as_slice(), &mut action)?;
            env.step(&action)?
        } else {
            env.step(&zero)?
        };
        step += 1;
        if result.reward > 0.0 {
            total_reward += result.reward;
            csv.row(trajectory_row(&env, true))?;
        }
        if result.terminated || result.truncated {
            break;
        }
        obs = result.observation;
    }
    csv.finish()?;
    Ok(EpisodeResult {
        total_reward,
        control_steps: env.control_steps(),
        seconds: env.control_steps() as f64 / config.env.control_rate,
    })
}

pub fn cmd_export_trajectory(config: &RunConfig, checkpoint: &Path, out: &Path) -> Result<EpisodeResult> {
    let policy = load_policy(config, checkpoint)?;
    prepare_dir(out)?;
    config.write_resolved(Experiment::ExportTrajectory, out)?;
    export_trajectory(config, &policy, config.sweep.trajectory_height, &out.join(TRAJECTORY_CSV))
}

/// Writes a zero-weight checkpoint for `config`; handy as an untrained baseline.
pub fn write_zero_checkpoint(config: &RunConfig, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        prepare_dir(parent)?;
    }
    save_checkpoint(&LinearPolicy::zeros(ACT_DIM, OBS_DIM), &config.config_hash(), path)
}

/// Human-readable one-line summary of a sweep row.
pub fn describe_row(parameter: &str, row: &SweepRow) -> String {
    format!(
        "{parameter}={} mean={:.3}s min={:.3}s max={:.3}s success={}/{}",
        row.value, row.mean_seconds, row.min_seconds, row.max_seconds, row.success_count, row.repeats
    )
}
