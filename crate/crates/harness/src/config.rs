//! Experiment configuration and scorer construction.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vqadv::scorers::{BridgeScorer, ConstScorer, ConvScorer, TvScorer};
use vqadv::{BlackBoxConfig, DifferentiableScorer, NormBudget, ScorerOracle, ThresholdRule, WhiteBoxConfig};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackChoice {
    Whitebox,
    Blackbox,
    PixelBaseline,
}

/// Which quality model to attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerChoice {
    Tv,
    Conv {
        #[serde(default)]
        seed: u64,
    },
    Const {
        value: f64,
    },
    /// `host:port` for TCP, or `exec:<program> [args...]` to spawn a host
    /// speaking the protocol on stdio.
    Bridge {
        address: String,
    },
}

impl Default for ScorerChoice {
    fn default() -> Self {
        ScorerChoice::Conv { seed: 0 }
    }
}

/// A scorer instance owned by one worker.
pub enum WorkerScorer {
    Differentiable(Box<dyn DifferentiableScorer + Send>),
    QueryOnly(Box<dyn ScorerOracle + Send>),
}

impl WorkerScorer {
    pub fn oracle(&mut self) -> &mut dyn ScorerOracle {
        match self {
            WorkerScorer::Differentiable(s) => s.as_mut(),
            WorkerScorer::QueryOnly(s) => s.as_mut(),
        }
    }

    pub fn differentiable(&mut self) -> Option<&mut (dyn DifferentiableScorer + Send)> {
        match self {
            WorkerScorer::Differentiable(s) => Some(s.as_mut()),
            WorkerScorer::QueryOnly(_) => None,
        }
    }
}

impl ScorerChoice {
    pub fn build(&self) -> vqadv::Result<WorkerScorer> {
        Ok(match self {
            ScorerChoice::Tv => WorkerScorer::Differentiable(Box::new(TvScorer::new())),
            ScorerChoice::Conv { seed } => WorkerScorer::Differentiable(Box::new(ConvScorer::new(*seed))),
            ScorerChoice::Const { value } => WorkerScorer::Differentiable(Box::new(ConstScorer::new(*value))),
            ScorerChoice::Bridge { address } => {
                let bridge = match address.strip_prefix("exec:") {
                    Some(command) => {
                        let mut parts = command.split_whitespace().map(str::to_owned);
                        let program = parts
                            .next()
                            .ok_or_else(|| vqadv::Error::Config("empty bridge command".into()))?;
                        let args: Vec<String> = parts.collect();
                        BridgeScorer::spawn(&program, &args)?
                    }
                    None => BridgeScorer::connect_tcp(address)?,
                };
                WorkerScorer::QueryOnly(Box::new(bridge))
            }
        })
    }
}

/// What to do with manifest entries that carry no MOS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MosFallback {
    /// Missing MOS is a configuration error.
    #[default]
    Require,
    /// Use the clean score of the attacked scorer as MOS.
    CleanScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifest: PathBuf,
    pub attack: AttackChoice,
    pub scorer: ScorerChoice,
    pub threshold_rule: ThresholdRule,
    pub mos_fallback: MosFallback,
    pub whitebox: WhiteBoxConfig,
    pub blackbox: BlackBoxConfig,
    /// Fraction of frames attacked, spread evenly over the video.
    pub perturb_ratio: f64,
    pub output_dir: PathBuf,
    pub global_seed: u64,
    /// Worker threads; each owns one scorer instance.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("manifest.json"),
            attack: AttackChoice::Blackbox,
            scorer: ScorerChoice::default(),
            threshold_rule: ThresholdRule::MedianOfBatch,
            mos_fallback: MosFallback::Require,
            whitebox: WhiteBoxConfig::default(),
            blackbox: BlackBoxConfig::default(),
            perturb_ratio: 1.0,
            output_dir: PathBuf::from("out"),
            global_seed: 0,
            workers: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        serde_json::from_str(&text).map_err(|source| HarnessError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.perturb_ratio > 0.0 && self.perturb_ratio <= 1.0) {
            return Err(HarnessError::Config(format!(
                "perturb_ratio must lie in (0, 1], got {}",
                self.perturb_ratio
            )));
        }
        if self.workers == 0 {
            return Err(HarnessError::Config("workers must be at least 1".into()));
        }
        match self.attack {
            AttackChoice::Whitebox => {
                self.whitebox.validate()?;
                if matches!(self.scorer, ScorerChoice::Bridge { .. }) {
                    return Err(HarnessError::Config(
                        "white-box attacks need gradients; bridge scorers are query-only".into(),
                    ));
                }
            }
            AttackChoice::Blackbox | AttackChoice::PixelBaseline => self.blackbox.validate()?,
        }
        if let ThresholdRule::MidpointOfRange { lower, upper } = self.threshold_rule {
            if !(lower < upper) {
                return Err(HarnessError::Config(format!(
                    "rating range [{lower}, {upper}] is empty"
                )));
            }
        }
        Ok(())
    }

    /// Caps every emitted adversarial video must satisfy.
    pub fn audit_budget(&self) -> NormBudget {
        match self.attack {
            AttackChoice::Whitebox => self.whitebox.budget,
            AttackChoice::Blackbox | AttackChoice::PixelBaseline => NormBudget {
                eps_l2: self.blackbox.gamma,
                eps_linf: self.blackbox.gamma,
            },
        }
    }

    /// Configuration as echoed in reports: everything except the output
    /// location, so reruns into different directories compare equal.
    pub fn echo(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("config serialises");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
            map.remove("workers");
        }
        value
    }
}

/// Seed for one video, derived from the global seed, the attack's own seed
/// and the video id (FNV-1a, then a splitmix64 finaliser).
pub fn video_seed(global_seed: u64, attack_seed: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = global_seed ^ h ^ attack_seed.rotate_left(32);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
