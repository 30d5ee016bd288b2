//! Per-query / per-iteration attack records.
//!
//! White-box CSV columns: `round,iter,loss,score,l2,linf`.
//! Black-box CSV columns: `round,query,op,accepted,loss,score,l2,linf,patches_this_query`
//! where `op` is `init`, `-` or `+`.

use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::video::VideoTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Whitebox,
    Blackbox,
    PixelBaseline,
}

/// What a record's scorer call evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trial {
    /// Round-initial evaluation of the current adversarial video.
    Init,
    /// Candidate with the perturbation map subtracted.
    Minus,
    /// Candidate with the perturbation map added.
    Plus,
    /// One gradient iteration.
    Step,
}

impl Trial {
    pub fn symbol(self) -> &'static str {
        match self {
            Trial::Init => "init",
            Trial::Minus => "-",
            Trial::Plus => "+",
            Trial::Step => "step",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub round: usize,
    /// Iteration (white-box) or query (black-box) index within the round.
    pub step: usize,
    pub trial: Trial,
    pub accepted: Option<bool>,
    /// Loss of the evaluated video.
    pub loss: f64,
    /// Loss of the retained adversarial state after this record.
    pub best_loss: f64,
    pub score: f64,
    pub pixel_l2: f64,
    pub linf: f64,
    /// Patch (or coordinate) indices selected by this query.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub patches: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackTrace {
    pub kind: AttackKind,
    pub records: Vec<TraceRecord>,
    pub rounds: usize,
    /// Every scorer call made by the attack.
    pub total_queries: u64,
    /// Scorer calls excluding round-initial evaluations.
    pub search_queries: u64,
    /// Stopped early because the query cap was hit.
    pub truncated: bool,
    /// Whole-video norms of the returned adversarial video.
    pub final_pixel_l2: f64,
    pub final_linf: f64,
    /// Score of the returned video, if it was ever evaluated.
    pub final_score: Option<f64>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl AttackTrace {
    pub(crate) fn new(kind: AttackKind) -> Self {
        Self {
            kind,
            records: Vec::new(),
            rounds: 0,
            total_queries: 0,
            search_queries: 0,
            truncated: false,
            final_pixel_l2: 0.0,
            final_linf: 0.0,
            final_score: None,
            wall_time: Duration::ZERO,
        }
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.best_loss)
    }

    /// Loss values of accepted candidates, in order.
    pub fn accepted_losses(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.accepted == Some(true))
            .map(|r| r.loss)
            .collect()
    }

    pub fn accepted_count(&self) -> usize {
        self.records.iter().filter(|r| r.accepted == Some(true)).count()
    }

    pub(crate) fn finish(&mut self, tally: NormTally, score: Option<f64>, started: std::time::Instant) {
        self.final_score = score;
        self.final_pixel_l2 = tally.pixel_l2();
        self.final_linf = tally.max_abs;
        self.wall_time = started.elapsed();
    }

    /// Number of places where the accepted-loss sequence fails to strictly decrease.
    pub fn monotonicity_violations(&self) -> usize {
        self.accepted_losses()
            .windows(2)
            .filter(|w| !(w[1] < w[0]))
            .count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match self.kind {
            AttackKind::Whitebox => {
                out.push_str("round,iter,loss,score,l2,linf\n");
                for r in &self.records {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{}",
                        r.round, r.step, r.loss, r.score, r.pixel_l2, r.linf
                    );
                }
            }
            AttackKind::Blackbox | AttackKind::PixelBaseline => {
                out.push_str("round,query,op,accepted,loss,score,l2,linf,patches_this_query\n");
                for r in &self.records {
                    let accepted = match r.accepted {
                        Some(true) => "1",
                        Some(false) => "0",
                        None => "",
                    };
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{}",
                        r.round,
                        r.step,
                        r.trial.symbol(),
                        accepted,
                        r.loss,
                        r.score,
                        r.pixel_l2,
                        r.linf,
                        r.patches.len()
                    );
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serialises")
    }
}

/// Result of one attack run.
#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub adversarial: VideoTensor,
    pub trace: AttackTrace,
}

/// Running sums for whole-video norms while one frame group is edited.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct NormTally {
    pub sq_sum: f64,
    pub max_abs: f64,
    pub count: usize,
}

impl NormTally {
    pub fn pixel_l2(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.sq_sum / self.count as f64).sqrt()
        }
    }
}
