//! Score-reversed boundary loss and anchor selection.
//!
//! A video judged high quality is driven toward the bottom of the score
//! range (boundary 0), a low-quality video toward the top (boundary 1). The
//! raw boundaries are mapped onto the scorer's output scale through batch
//! statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw anchor side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// High-quality video, pushed toward 0.
    Zero,
    /// Low-quality video, pushed toward 1.
    One,
}

impl Boundary {
    pub fn value(self) -> f64 {
        match self {
            Boundary::Zero => 0.0,
            Boundary::One => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorScore {
    pub raw_boundary: Boundary,
    /// Target in the scorer's own output scale.
    pub scaled_value: f64,
}

impl AnchorScore {
    pub fn new(raw_boundary: Boundary, scaled_value: f64) -> Result<Self> {
        if !scaled_value.is_finite() {
            return Err(Error::Config(format!("anchor {scaled_value} is not finite")));
        }
        Ok(Self {
            raw_boundary,
            scaled_value,
        })
    }

    /// Anchor whose scaled value equals the raw boundary.
    pub fn unscaled(raw_boundary: Boundary) -> Self {
        Self {
            raw_boundary,
            scaled_value: raw_boundary.value(),
        }
    }
}

/// How the high/low quality threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ThresholdRule {
    MedianOfBatch,
    /// Average of the lower and upper bound of the rating scale.
    MidpointOfRange { lower: f64, upper: f64 },
    Explicit { threshold: f64 },
}

impl Default for ThresholdRule {
    fn default() -> Self {
        Self::MedianOfBatch
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPolicy {
    pub threshold: f64,
    pub threshold_rule: ThresholdRule,
}

impl BoundaryPolicy {
    /// Resolve `rule` against a batch of MOS values.
    pub fn from_rule(rule: ThresholdRule, mos: &[f64]) -> Result<Self> {
        let threshold = match rule {
            ThresholdRule::MedianOfBatch => median(mos).ok_or_else(|| {
                Error::DegenerateBatch("median threshold needs at least one MOS".into())
            })?,
            ThresholdRule::MidpointOfRange { lower, upper } => 0.5 * (lower + upper),
            ThresholdRule::Explicit { threshold } => threshold,
        };
        if !threshold.is_finite() {
            return Err(Error::Config(format!("threshold {threshold} is not finite")));
        }
        Ok(Self {
            threshold,
            threshold_rule: rule,
        })
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

/// Boundary 0 for MOS above the threshold, 1 below. A tie maps to 0.
pub fn boundary_for(mos: f64, policy: &BoundaryPolicy) -> Boundary {
    if mos < policy.threshold {
        Boundary::One
    } else {
        Boundary::Zero
    }
}

/// `|estimated − anchor|`.
pub fn srb_loss(estimated: f64, anchor: &AnchorScore) -> f64 {
    (estimated - anchor.scaled_value).abs()
}

/// Batch statistics of ground-truth and estimated scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorerStats {
    pub est_mean: f64,
    pub est_std: f64,
    pub mos_mean: f64,
    pub mos_std: f64,
}

impl ScorerStats {
    /// Means and population standard deviations.
    pub fn from_batch(mos: &[f64], estimated: &[f64]) -> Result<Self> {
        if mos.is_empty() || mos.len() != estimated.len() {
            return Err(Error::DegenerateBatch(format!(
                "need equal, non-empty MOS and estimate lists (got {} and {})",
                mos.len(),
                estimated.len()
            )));
        }
        let (mos_mean, mos_std) = mean_std(mos);
        let (est_mean, est_std) = mean_std(estimated);
        Ok(Self {
            est_mean,
            est_std,
            mos_mean,
            mos_std,
        })
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `(raw − mos_mean) / mos_std · est_std + est_mean`.
pub fn scale_boundary(raw: Boundary, stats: &ScorerStats) -> Result<f64> {
    if !(stats.mos_std > 0.0) {
        return Err(Error::DegenerateBatch(
            "MOS standard deviation is zero; boundaries cannot be rescaled".into(),
        ));
    }
    Ok((raw.value() - stats.mos_mean) / stats.mos_std * stats.est_std + stats.est_mean)
}

/// Anchor for one video: boundary from its MOS, rescaled to the scorer.
pub fn anchor_for(mos: f64, policy: &BoundaryPolicy, stats: &ScorerStats) -> Result<AnchorScore> {
    let raw = boundary_for(mos, policy);
    AnchorScore::new(raw, scale_boundary(raw, stats)?)
}
