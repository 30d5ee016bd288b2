//! One-parameter ablations: rerun an experiment per axis value.

use std::fmt::Write as _;
use std::fs;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{AttackChoice, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::experiment::{run_experiment, ExperimentReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Frames per round.
    T,
    /// Black-box queries per round.
    N,
    /// Perturbed-frame ratio.
    Ratio,
    /// White-box step rule.
    StepRule,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::T => "t",
            SweepAxis::N => "n",
            SweepAxis::Ratio => "ratio",
            SweepAxis::StepRule => "step_rule",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t" => Ok(SweepAxis::T),
            "n" => Ok(SweepAxis::N),
            "ratio" => Ok(SweepAxis::Ratio),
            "step_rule" | "step-rule" => Ok(SweepAxis::StepRule),
            other => Err(HarnessError::Config(format!("unknown sweep axis {other:?}"))),
        }
    }
}

fn parse<T: FromStr>(axis: SweepAxis, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| HarnessError::Config(format!("bad value {value:?} for axis {}", axis.name())))
}

/// `base` with one axis set to `value`.
pub fn apply_axis(base: &ExperimentConfig, axis: SweepAxis, value: &str) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::T => {
            let t: usize = parse(axis, value)?;
            cfg.whitebox.frames_per_round = t;
            cfg.blackbox.frames_per_round = t;
        }
        SweepAxis::N => {
            if cfg.attack == AttackChoice::Whitebox {
                return Err(HarnessError::Config("axis n applies to query-based attacks only".into()));
            }
            cfg.blackbox.queries_per_round = parse(axis, value)?;
        }
        SweepAxis::Ratio => cfg.perturb_ratio = parse(axis, value)?,
        SweepAxis::StepRule => {
            if cfg.attack != AttackChoice::Whitebox {
                return Err(HarnessError::Config("axis step_rule applies to the white-box attack only".into()));
            }
            cfg.whitebox.step_rule = serde_json::from_value(serde_json::Value::String(value.trim().to_string()))
                .map_err(|_| HarnessError::Config(format!("unknown step rule {value:?}")))?;
        }
    }
    cfg.output_dir = base.output_dir.join(format!("{}={}", axis.name(), value.trim()));
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: String,
    pub report: ExperimentReport,
}

/// Run `base` once per value. Each run writes into
/// `<output_dir>/<axis>=<value>/`; the comparison table goes to
/// `<output_dir>/sweep.txt` and `sweep.json`.
pub fn sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[String]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|v| apply_axis(base, axis, v))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(values.len());
    for (value, cfg) in values.iter().zip(&configs) {
        rows.push(SweepRow {
            axis,
            value: value.trim().to_string(),
            report: run_experiment(cfg)?,
        });
    }
    fs::create_dir_all(&base.output_dir).map_err(HarnessError::io(&base.output_dir))?;
    let path = base.output_dir.join("sweep.txt");
    fs::write(&path, sweep_table(axis, &rows)).map_err(HarnessError::io(&path))?;
    let path = base.output_dir.join("sweep.json");
    let json = serde_json::to_string_pretty(&rows).expect("sweep serialises");
    fs::write(&path, json + "\n").map_err(HarnessError::io(&path))?;
    Ok(rows)
}

pub fn sweep_table(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let na = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>10} {:>10} {:>10} {:>12} {:>10}",
        axis.name(),
        "SRCC",
        "PLCC",
        "R",
        "mean loss",
        "queries"
    );
    for row in rows {
        let s = &row.report.summary;
        let queries: u64 = row.report.videos.iter().map(|v| v.record.queries_used).sum();
        let _ = writeln!(
            out,
            "{:<12} {:>10} {:>10} {:>10.4} {:>12.6} {:>10}",
            row.value,
            na(s.srcc_post),
            na(s.plcc_post),
            s.r_value,
            s.mean_final_loss,
            queries
        );
    }
    out
}
