//! Static linear policy `u = W · normalize(x)` with online state normalization.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-8;
pub const CHECKPOINT_FORMAT_VERSION: u64 = 1;

/// Per-coordinate running mean and population variance (Welford).
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStat {
    mean: Vec<f64>,
    var: Vec<f64>,
    count: u64,
}

impl RunningStat {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![0.0; dim],
            count: 0,
        }
    }

    pub fn from_parts(mean: Vec<f64>, var: Vec<f64>, count: u64) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::Dimension {
                what: "normalizer variance",
                expected: mean.len(),
                actual: var.len(),
            });
        }
        if var.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Malformed {
                what: "normalizer",
                reason: "variance entries must be >= 0".into(),
            });
        }
        Ok(Self { mean, var, count })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.mean.len());
        let n = (self.count + 1) as f64;
        let prev = self.count as f64;
        for ((mean, var), &xi) in self.mean.iter_mut().zip(&mut self.var).zip(x) {
            let delta = xi - *mean;
            *mean += delta / n;
            *var = ((prev * *var + delta * (xi - *mean)) / n).max(0.0);
        }
        self.count += 1;
    }

    /// Exact pairwise combination of two sets of statistics.
    pub fn merge(&mut self, other: &RunningStat) {
        debug_assert_eq!(other.dim(), self.dim());
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            let m2 = self.var[i] * na + other.var[i] * nb + delta * delta * na * nb / n;
            self.mean[i] += delta * nb / n;
            self.var[i] = (m2 / n).max(0.0);
        }
        self.count += other.count;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearPolicy {
    /// `act_dim × obs_dim`
    weights: DMatrix<f64>,
    stats: RunningStat,
    variance_floor: f64,
}

impl LinearPolicy {
    pub fn zeros(act_dim: usize, obs_dim: usize) -> Self {
        Self::from_weights(DMatrix::zeros(act_dim, obs_dim))
    }

    pub fn from_weights(weights: DMatrix<f64>) -> Self {
        let obs_dim = weights.ncols();
        Self {
            weights,
            stats: RunningStat::new(obs_dim),
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        }
    }

    pub fn with_stats(mut self, stats: RunningStat) -> Result<Self> {
        if stats.dim() != self.obs_dim() {
            return Err(Error::Dimension {
                what: "normalizer",
                expected: self.obs_dim(),
                actual: stats.dim(),
            });
        }
        self.stats = stats;
        Ok(self)
    }

    pub fn with_variance_floor(mut self, floor: f64) -> Self {
        self.variance_floor = floor;
        self
    }

    pub fn obs_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn act_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn set_weights(&mut self, weights: DMatrix<f64>) -> Result<()> {
        if weights.shape() != self.weights.shape() {
            return Err(Error::Dimension {
                what: "weight columns",
                expected: self.obs_dim(),
                actual: weights.ncols(),
            });
        }
        self.weights = weights;
        Ok(())
    }

    pub fn stats(&self) -> &RunningStat {
        &self.stats
    }

    pub fn variance_floor(&self) -> f64 {
        self.variance_floor
    }

    /// Copy of this policy with different weights and the same normalization.
    pub fn perturbed(&self, weights: DMatrix<f64>) -> Self {
        debug_assert_eq!(weights.shape(), self.weights.shape());
        Self {
            weights,
            stats: self.stats.clone(),
            variance_floor: self.variance_floor,
        }
    }

    pub fn normalizer_update(&mut self, x: &[f64]) {
        self.stats.push(x);
    }

    pub fn merge_stats(&mut self, other: &RunningStat) {
        self.stats.merge(other);
    }

    pub fn act(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.act_dim()];
        self.act_into(x, &mut out)?;
        Ok(out)
    }

    /// `out = W · ((x − mean) / sqrt(var + floor))`; identity normalization before
    /// any statistics have been collected.
    pub fn act_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.obs_dim() {
            return Err(Error::Dimension {
                what: "observation",
                expected: self.obs_dim(),
                actual: x.len(),
            });
        }
        if out.len() != self.act_dim() {
            return Err(Error::Dimension {
                what: "action buffer",
                expected: self.act_dim(),
                actual: out.len(),
            });
        }
        let normalized: Vec<f64> = if self.stats.count == 0 {
            x.to_vec()
        } else {
            x.iter()
                .zip(&self.stats.mean)
                .zip(&self.stats.var)
                .map(|((xi, m), v)| (xi - m) / (v + self.variance_floor).sqrt())
                .collect()
        };
        let z = nalgebra::DVectorView::from_slice(&normalized, normalized.len());
        let u = &self.weights * z;
        out.copy_from_slice(u.as_slice());
        Ok(())
    }
}

/// On-disk policy. JSON with shortest round-trip float formatting, so every
/// numeric field reloads bit-exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyCheckpoint {
    pub format_version: u64,
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Row-major `act_dim × obs_dim`.
    pub weights: Vec<f64>,
    pub norm_mean: Vec<f64>,
    pub norm_var: Vec<f64>,
    pub norm_count: u64,
    pub variance_floor: f64,
    pub config_hash: String,
}

impl PolicyCheckpoint {
    pub fn from_policy(policy: &LinearPolicy, config_hash: &str) -> Self {
        let weights = policy.weights.transpose().as_slice().to_vec();
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            obs_dim: policy.obs_dim(),
            act_dim: policy.act_dim(),
            weights,
            norm_mean: policy.stats.mean.clone(),
            norm_var: policy.stats.var.clone(),
            norm_count: policy.stats.count,
            variance_floor: policy.variance_floor,
            config_hash: config_hash.to_string(),
        }
    }

    /// Rebuilds the policy after checking dimensions and, when given, the config hash.
    pub fn into_policy(
        self,
        obs_dim: usize,
        act_dim: usize,
        expected_hash: Option<&str>,
    ) -> Result<LinearPolicy> {
        if self.obs_dim != obs_dim {
            return Err(Error::Dimension {
                what: "checkpoint observation dim",
                expected: obs_dim,
                actual: self.obs_dim,
            });
        }
        if self.act_dim != act_dim {
            return Err(Error::Dimension {
                what: "checkpoint action dim",
                expected: act_dim,
                actual: self.act_dim,
            });
        }
        if self.weights.len() != obs_dim * act_dim {
            return Err(Error::Dimension {
                what: "checkpoint weight count",
                expected: obs_dim * act_dim,
                actual: self.weights.len(),
            });
        }
        for (what, v) in [("checkpoint norm_mean", &self.norm_mean), ("checkpoint norm_var", &self.norm_var)] {
            if v.len() != obs_dim {
                return Err(Error::Dimension {
                    what,
                    expected: obs_dim,
                    actual: v.len(),
                });
            }
        }
        if let Some(expected) = expected_hash {
            if expected != self.config_hash {
                return Err(Error::ConfigHash {
                    expected: expected.to_string(),
                    found: self.config_hash,
                });
            }
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::Malformed {
                what: "checkpoint",
                reason: "variance_floor must be positive".into(),
            });
        }
        let weights = DMatrix::from_row_slice(act_dim, obs_dim, &self.weights);
        let stats = RunningStat::from_parts(self.norm_mean, self.norm_var, self.norm_count)?;
        Ok(LinearPolicy {
            weights,
            stats,
            variance_floor: self.variance_floor,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    /// Parses a checkpoint, rejecting unknown format versions before anything else.
    pub fn from_json(text: &str) -> Result<Self> {
        let malformed = |e: serde_json::Error| Error::Malformed {
            what: "checkpoint",
            reason: e.to_string(),
        };
        let value: serde_json::Value = serde_json::from_str(text).map_err(malformed)?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Malformed {
                what: "checkpoint",
                reason: "missing integer format_version".into(),
            })?;
        if version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                supported: CHECKPOINT_FORMAT_VERSION,
            });
        }
        serde_json::from_str(text).map_err(malformed)
    }
}

pub fn save_checkpoint(policy: &LinearPolicy, config_hash: &str, path: &Path) -> Result<()> {
    let text = PolicyCheckpoint::from_policy(policy, config_hash).to_json();
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<PolicyCheckpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    PolicyCheckpoint::from_json(&text)
}
