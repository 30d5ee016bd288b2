//! Batch metrics: SRCC, PLCC and the robustness ratio R.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard on the denominator of R.
pub const R_EPSILON: f64 = 1e-8;

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "correlation inputs differ in length ({} vs {})",
            pred.len(),
            truth.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 2 samples, got {}",
            pred.len()
        )));
    }
    Ok(())
}

/// 1-based ranks, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of raw values.
pub fn plcc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mt = truth.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let (dp, dt) = (p - mp, t - mt);
        sxy += dp * dt;
        sxx += dp * dp;
        syy += dt * dt;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("input has zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman correlation: Pearson over average ranks.
pub fn srcc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    plcc(&average_ranks(pred), &average_ranks(truth))
}

/// Per-video outcome of one attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub id: String,
    pub mos: f64,
    pub clean_score: f64,
    pub adv_score: f64,
    /// Scaled anchor.
    pub anchor: f64,
    pub queries_used: u64,
    pub final_l2: f64,
    pub final_linf: f64,
}

/// `mean ln(|f − b| / max(|f − f_adv|, 1e-8))` over the batch.
pub fn r_metric(records: &[BatchRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::DegenerateBatch("R needs at least one video".into()));
    }
    let sum: f64 = records
        .iter()
        .map(|r| {
            let expected = (r.clean_score - r.anchor).abs();
            let actual = (r.clean_score - r.adv_score).abs().max(R_EPSILON);
            (expected / actual).ln()
        })
        .sum();
    Ok(sum / records.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub n_videos: usize,
    /// `None` when undefined (fewer than 2 videos or constant scores).
    pub srcc_pre: Option<f64>,
    pub srcc_post: Option<f64>,
    pub plcc_pre: Option<f64>,
    pub plcc_post: Option<f64>,
    /// R with adversarial scores equal to clean scores.
    pub r_pre: f64,
    pub r_value: f64,
    pub mean_final_loss: f64,
    pub config: serde_json::Value,
}

fn optional(result: Result<f64>) -> Result<Option<f64>> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedCorrelation(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Correlations of clean and adversarial scores against MOS, plus R.
pub fn assemble_report(records: &[BatchRecord], config: serde_json::Value) -> Result<RobustnessReport> {
    let mos: Vec<f64> = records.iter().map(|r| r.mos).collect();
    let clean: Vec<f64> = records.iter().map(|r| r.clean_score).collect();
    let adv: Vec<f64> = records.iter().map(|r| r.adv_score).collect();
    let unattacked: Vec<BatchRecord> = records
        .iter()
        .map(|r| BatchRecord {
            adv_score: r.clean_score,
            ..r.clone()
        })
        .collect();
    let mean_final_loss =
        records.iter().map(|r| (r.adv_score - r.anchor).abs()).sum::<f64>() / records.len().max(1) as f64;
    Ok(RobustnessReport {
        n_videos: records.len(),
        srcc_pre: optional(srcc(&clean, &mos))?,
        srcc_post: optional(srcc(&adv, &mos))?,
        plcc_pre: optional(plcc(&clean, &mos))?,
        plcc_post: optional(plcc(&adv, &mos))?,
        r_pre: r_metric(&unattacked)?,
        r_value: r_metric(records)?,
        mean_final_loss,
        config,
    })
}

impl RobustnessReport {
    /// Aligned text table, post-attack values with pre-attack in parentheses.
    pub fn to_table(&self) -> String {
        fn cell(post: Option<f64>, pre: Option<f64>) -> String {
            let f = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
            format!("{} ({})", f(post), f(pre))
        }
        let rows = [
            ("SRCC", cell(self.srcc_post, self.srcc_pre)),
            ("PLCC", cell(self.plcc_post, self.plcc_pre)),
            ("R", cell(Some(self.r_value), Some(self.r_pre))),
            ("loss", format!("{:.6}", self.mean_final_loss)),
        ];
        let mut out = String::new();
        let _ = writeln!(out, "videos: {}", self.n_videos);
        let _ = writeln!(out, "{:<6} {:>20}", "metric", "attacked (clean)");
        for (name, value) in rows {
            let _ = writeln!(out, "{name:<6} {value:>20}");
        }
        out
    }
}
