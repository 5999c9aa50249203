//! Experiment configuration, read from JSON.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use coreplan::features::FeatureFile;
use coreplan::generate::{generate_instance, Instance, InstanceSpec};
use coreplan::mdp::Mdp;
use serde::{Deserialize, Serialize};

/// Largest instance the driver accepts.
pub const MAX_BENCH_STATES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceSource {
    Generate(InstanceSpec),
    Load { mdp: PathBuf, features: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Planner {
    CorelpExact,
    Corestomp,
    Lralp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionRule {
    /// `a ~ π̂` from a fork of the oracle.
    #[default]
    Sample,
    Argmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Geometry {
    #[default]
    Literal,
    Composite,
}

fn default_trials() -> usize {
    10
}

fn default_scale() -> f64 {
    1.0
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instance: InstanceSource,
    pub planner: Planner,
    #[serde(default)]
    pub s0: usize,
    /// Half-width of uniform reward noise in the oracle; clipped to keep rewards in `[−1, 1]`.
    #[serde(default)]
    pub reward_noise: f64,
    /// Multiplies every reward of the instance; in `(0, 1]`.
    #[serde(default = "default_scale")]
    pub reward_scale: f64,
    /// Iteration counts for `corestomp`; ignored by the exact planners.
    #[serde(default)]
    pub schedule: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub action: ActionRule,
    #[serde(default)]
    pub geometry: Geometry,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.trials > 0, "trials must be positive");
        ensure!(
            self.reward_noise >= 0.0 && self.reward_noise.is_finite(),
            "reward_noise must be a non-negative number"
        );
        ensure!(
            self.reward_scale > 0.0 && self.reward_scale <= 1.0,
            "reward_scale must lie in (0, 1]"
        );
        ensure!(self.schedule.iter().all(|&t| t > 0), "schedule entries must be positive");
        match &self.instance {
            InstanceSource::Generate(spec) => {
                ensure!(
                    spec.num_states <= MAX_BENCH_STATES,
                    "num_states {} exceeds the cap of {MAX_BENCH_STATES}",
                    spec.num_states
                );
                ensure!(self.s0 < spec.num_states, "s0 {} out of range", self.s0);
            }
            InstanceSource::Load { mdp, features } => {
                for p in [mdp, features] {
                    if !p.exists() {
                        bail!("{} does not exist", p.display());
                    }
                }
            }
        }
        Ok(())
    }

    /// The generated or loaded instance, with the core set certified.
    pub fn instance(&self) -> Result<Instance> {
        let mut inst = match &self.instance {
            InstanceSource::Generate(spec) => generate_instance(spec)?,
            InstanceSource::Load { mdp, features } => {
                let mdp = Mdp::load(mdp)?;
                let (features, core) = FeatureFile::load(features, true)?;
                Instance { mdp, features, core }
            }
        };
        if self.reward_scale != 1.0 {
            let f = inst.mdp.to_file();
            let rewards = f.rewards.iter().map(|r| r * self.reward_scale).collect();
            inst.mdp = Mdp::new(f.num_states, f.num_actions, f.transitions, rewards, f.gamma)?;
        }
        let n = inst.mdp.num_states();
        ensure!(n <= MAX_BENCH_STATES, "instance has {n} states, cap is {MAX_BENCH_STATES}");
        ensure!(inst.features.num_states() == n, "feature map has {} rows for {n} states", inst.features.num_states());
        ensure!(self.s0 < n, "s0 {} out of range", self.s0);
        Ok(inst)
    }
}
