//! Batch orchestration: clean scoring, anchor selection, attacks, output
//! files and the post-hoc budget audit.
//!
//! Output directory layout: `<id>.rvid` (adversarial video),
//! `<id>.trace.csv`, `<id>.trace.json`, `report.json`, `report.txt`.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vqadv::loss::{anchor_for, boundary_for};
use vqadv::video::{linf, pixel_l2};
use vqadv::{
    blackbox, whitebox, AnchorScore, AttackOutcome, BatchRecord, Boundary, BoundaryPolicy, NormBudget,
    RobustnessReport, ScorerStats, VideoTensor,
};

use crate::config::{video_seed, AttackChoice, ExperimentConfig, MosFallback, WorkerScorer};
use crate::error::{HarnessError, Result};
use crate::manifest::{load_video, DatasetManifest, ManifestEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorScaling {
    /// Boundaries mapped through batch MOS/score statistics.
    Batch,
    /// MOS has zero spread; raw boundaries 0 and 1 used as-is.
    Unscaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoResult {
    #[serde(flatten)]
    pub record: BatchRecord,
    pub boundary: Boundary,
    pub seed: u64,
    pub rounds: usize,
    pub search_queries: u64,
    pub truncated: bool,
    pub accepted_moves: usize,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoFailure {
    pub id: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub summary: RobustnessReport,
    pub threshold: f64,
    pub anchor_scaling: AnchorScaling,
    pub videos: Vec<VideoResult>,
    pub failures: Vec<VideoFailure>,
    /// Budget or accounting violations found after the attacks.
    pub breaches: Vec<String>,
}

impl ExperimentReport {
    pub fn to_text(&self) -> String {
        let mut out = self.summary.to_table();
        out.push_str(&format!("threshold: {}\n", self.threshold));
        for f in &self.failures {
            out.push_str(&format!("failed {} ({}): {}\n", f.id, f.stage, f.message));
        }
        for b in &self.breaches {
            out.push_str(&format!("BREACH {b}\n"));
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(HarnessError::io(path))?;
        serde_json::from_str(&text).map_err(|source| HarnessError::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn failure(id: &str, stage: &str, message: impl ToString) -> VideoFailure {
    VideoFailure {
        id: id.to_string(),
        stage: stage.to_string(),
        message: message.to_string(),
    }
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start {workers} workers: {e}")))
}

/// Run one attack over every manifest entry and write all outputs.
///
/// Per-video failures (unreadable file, scorer error) are recorded and the
/// run continues. Budget violations found by re-reading the written files
/// are returned as [`HarnessError::InvariantBreach`] after the report is
/// written.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let manifest = DatasetManifest::load(&cfg.manifest)?;
    fs::create_dir_all(&cfg.output_dir).map_err(HarnessError::io(&cfg.output_dir))?;
    let pool = build_pool(cfg.workers)?;

    let clean: Vec<std::result::Result<f64, VideoFailure>> = pool.install(|| {
        manifest
            .entries
            .par_iter()
            .map_init(
                || cfg.scorer.build(),
                |scorer, entry| {
                    let scorer = scorer.as_mut().map_err(|e| failure(&entry.id, "connect", e))?;
                    let video = load_video(&entry.video_path).map_err(|e| failure(&entry.id, "load", e))?;
                    scorer
                        .oracle()
                        .score(&video)
                        .map_err(|e| failure(&entry.id, "clean-score", e))
                },
            )
            .collect()
    });

    let mut failures = Vec::new();
    let mut scored: Vec<(&ManifestEntry, f64, f64)> = Vec::new();
    for (entry, result) in manifest.entries.iter().zip(clean) {
        match result {
            Ok(score) => {
                let mos = match (entry.mos, cfg.mos_fallback) {
                    (Some(m), _) => m,
                    (None, MosFallback::CleanScore) => score,
                    (None, MosFallback::Require) => {
                        return Err(HarnessError::Config(format!(
                            "video {:?} has no MOS and mos_fallback is \"require\"",
                            entry.id
                        )))
                    }
                };
                scored.push((entry, mos, score));
            }
            Err(f) => failures.push(f),
        }
    }
    if scored.is_empty() {
        return Err(HarnessError::Core(vqadv::Error::DegenerateBatch(
            "no video could be scored".into(),
        )));
    }

    let mos: Vec<f64> = scored.iter().map(|s| s.1).collect();
    let clean_scores: Vec<f64> = scored.iter().map(|s| s.2).collect();
    let policy = BoundaryPolicy::from_rule(cfg.threshold_rule, &mos)?;
    let stats = ScorerStats::from_batch(&mos, &clean_scores)?;
    let scaling = if stats.mos_std > 0.0 {
        AnchorScaling::Batch
    } else {
        AnchorScaling::Unscaled
    };
    let budget = cfg.audit_budget();

    let attacked: Vec<std::result::Result<(VideoResult, Vec<String>), VideoFailure>> = pool.install(|| {
        scored
            .par_iter()
            .map_init(
                || cfg.scorer.build(),
                |scorer, &(entry, mos, clean)| {
                    let scorer = scorer.as_mut().map_err(|e| failure(&entry.id, "connect", e))?;
                    let anchor = match scaling {
                        AnchorScaling::Batch => anchor_for(mos, &policy, &stats),
                        AnchorScaling::Unscaled => Ok(AnchorScore::unscaled(boundary_for(mos, &policy))),
                    }
                    .map_err(|e| failure(&entry.id, "anchor", e))?;
                    attack_one(cfg, scorer, entry, mos, clean, &anchor, &budget)
                },
            )
            .collect()
    });

    let mut videos = Vec::new();
    let mut breaches = Vec::new();
    for result in attacked {
        match result {
            Ok((video, found)) => {
                videos.push(video);
                breaches.extend(found);
            }
            Err(f) => failures.push(f),
        }
    }
    failures.sort_by(|a, b| a.id.cmp(&b.id));
    if videos.is_empty() {
        return Err(HarnessError::Core(vqadv::Error::DegenerateBatch(
            "every video failed".into(),
        )));
    }
    let records: Vec<BatchRecord> = videos.iter().map(|v| v.record.clone()).collect();
    let summary = vqadv::assemble_report(&records, cfg.echo())?;
    let report = ExperimentReport {
        summary,
        threshold: policy.threshold,
        anchor_scaling: scaling,
        videos,
        failures,
        breaches,
    };
    write_report(&report, &cfg.output_dir)?;
    if !report.breaches.is_empty() {
        return Err(HarnessError::InvariantBreach(report.breaches.join("; ")));
    }
    Ok(report)
}

pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(report).expect("report serialises");
    let path = dir.join("report.json");
    fs::write(&path, json + "\n").map_err(HarnessError::io(&path))?;
    let path = dir.join("report.txt");
    fs::write(&path, report.to_text()).map_err(HarnessError::io(&path))
}

fn attack_one(
    cfg: &ExperimentConfig,
    scorer: &mut WorkerScorer,
    entry: &ManifestEntry,
    mos: f64,
    clean: f64,
    anchor: &AnchorScore,
    budget: &NormBudget,
) -> std::result::Result<(VideoResult, Vec<String>), VideoFailure> {
    let id = entry.id.as_str();
    let video = load_video(&entry.video_path).map_err(|e| failure(id, "load", e))?;
    let ratio = cfg.perturb_ratio;
    let queries_before = scorer.oracle().query_count();
    let (seed, outcome) = match cfg.attack {
        AttackChoice::Whitebox => {
            let wb = whitebox::WhiteBoxConfig {
                seed: video_seed(cfg.global_seed, cfg.whitebox.seed, id),
                ..cfg.whitebox
            };
            let s = scorer.differentiable().ok_or_else(|| {
                failure(id, "attack", vqadv::Error::Capability("scorer exposes no gradient".into()))
            })?;
            (wb.seed, whitebox::perturb_subset(&video, s, anchor, &wb, ratio))
        }
        AttackChoice::Blackbox | AttackChoice::PixelBaseline => {
            let bb = blackbox::BlackBoxConfig {
                seed: video_seed(cfg.global_seed, cfg.blackbox.seed, id),
                ..cfg.blackbox
            };
            let s = scorer.oracle();
            let outcome = if cfg.attack == AttackChoice::Blackbox {
                blackbox::perturb_subset(&video, s, anchor, &bb, ratio)
            } else {
                blackbox::pixel_perturb_subset(&video, s, anchor, &bb, ratio)
            };
            (bb.seed, outcome)
        }
    };
    let AttackOutcome { adversarial, trace } = outcome.map_err(|e| failure(id, "attack", e))?;
    let mut breaches = Vec::new();
    let used = scorer.oracle().query_count() - queries_before;
    if used != trace.total_queries {
        breaches.push(format!(
            "{id}: scorer counted {used} queries, trace records {}",
            trace.total_queries
        ));
    }
    if trace.monotonicity_violations() > 0 {
        breaches.push(format!("{id}: accepted losses not strictly decreasing"));
    }

    let out = &cfg.output_dir;
    let adv_path = out.join(format!("{id}.rvid"));
    vqadv::io::write_rvid(&adversarial, &adv_path).map_err(|e| failure(id, "write", e))?;
    let csv_path = out.join(format!("{id}.trace.csv"));
    fs::write(&csv_path, trace.to_csv()).map_err(|e| failure(id, "write", e))?;
    let json_path = out.join(format!("{id}.trace.json"));
    fs::write(&json_path, trace.to_json()).map_err(|e| failure(id, "write", e))?;

    match audit_file(&entry.video_path, &adv_path, budget) {
        Ok(row) if !row.within_budget => breaches.push(format!(
            "{id}: pixel_l2 {} / linf {} exceed eps_l2 {} / eps_linf {}",
            row.pixel_l2, row.linf, budget.eps_l2, budget.eps_linf
        )),
        Ok(_) => {}
        Err(e) => breaches.push(format!("{id}: audit failed: {e}")),
    }

    let final_loss = trace.final_loss().unwrap_or_else(|| vqadv::loss::srb_loss(clean, anchor));
    Ok((
        VideoResult {
            record: BatchRecord {
                id: id.to_string(),
                mos,
                clean_score: clean,
                adv_score: trace.final_score.unwrap_or(clean),
                anchor: anchor.scaled_value,
                queries_used: trace.total_queries,
                final_l2: trace.final_pixel_l2,
                final_linf: trace.final_linf,
            },
            boundary: anchor.raw_boundary,
            seed,
            rounds: trace.rounds,
            search_queries: trace.search_queries,
            truncated: trace.truncated,
            accepted_moves: trace.accepted_count(),
            final_loss,
        },
        breaches,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub id: String,
    pub pixel_l2: f64,
    pub linf: f64,
    pub within_budget: bool,
}

fn audit_file(original: &Path, adversarial: &Path, budget: &NormBudget) -> Result<AuditRow> {
    let orig: VideoTensor = load_video(original)?;
    let adv = vqadv::io::read_rvid(adversarial)?;
    let l2 = pixel_l2(&orig, &adv)?;
    let li = linf(&orig, &adv)?;
    Ok(AuditRow {
        id: String::new(),
        pixel_l2: l2,
        linf: li,
        within_budget: budget.admits(l2, li) && adv.data().iter().all(|v| (0.0..=1.0).contains(v)),
    })
}

/// Recompute norms of every `<output_dir>/<id>.rvid` against its manifest
/// original. Entries without an output file are skipped.
pub fn audit_outputs(manifest: &DatasetManifest, output_dir: &Path, budget: &NormBudget) -> Result<Vec<AuditRow>> {
    let mut rows = Vec::new();
    for entry in &manifest.entries {
        let adv: PathBuf = output_dir.join(format!("{}.rvid", entry.id));
        if !adv.is_file() {
            continue;
        }
        let mut row = audit_file(&entry.video_path, &adv, budget)?;
        row.id = entry.id.clone();
        rows.push(row);
    }
    Ok(rows)
}
