//! Query-only random search over a patch grid, plus a single-coordinate
//! baseline.
//!
//! A frame is tiled into `⌊H/h⌋·⌊W/w⌋` blocks per channel; patch index
//! `(channel·rows + row)·cols + col` names one `h×w` block of one channel.
//! Each round shuffles all patch indices and consumes them `Z` at a time. A
//! query draws one `±γ` map, applies it to every selected patch of every
//! frame in the round, and tries `−` then `+`, keeping the first candidate
//! that lowers the loss.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{srb_loss, AnchorScore};
use crate::scorers::ScorerOracle;
use crate::trace::{AttackKind, AttackOutcome, AttackTrace, NormTally, Trial, TraceRecord};
use crate::video::{frame_subset, offset_within, Shape, VideoTensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlackBoxConfig {
    /// Queries per round (`N`).
    pub queries_per_round: usize,
    /// Frames per round (`T`).
    pub frames_per_round: usize,
    /// Perturbation magnitude (`γ`).
    pub gamma: f64,
    pub patch_h: usize,
    pub patch_w: usize,
    pub seed: u64,
    /// Hard cap on scorer calls for the whole video, round-initial
    /// evaluations included.
    pub max_total_queries: Option<u64>,
}

impl Default for BlackBoxConfig {
    fn default() -> Self {
        Self {
            queries_per_round: 300,
            frames_per_round: 1,
            gamma: 5.0 / 255.0,
            patch_h: 56,
            patch_w: 56,
            seed: 0,
            max_total_queries: None,
        }
    }
}

impl BlackBoxConfig {
    pub fn validate(&self) -> Result<()> {
        if self.queries_per_round == 0 {
            return Err(Error::Config("queries per round N must be at least 1".into()));
        }
        if self.frames_per_round == 0 {
            return Err(Error::Config("frames per round T must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.patch_h == 0 || self.patch_w == 0 {
            return Err(Error::Config("patch dimensions must be at least 1".into()));
        }
        Ok(())
    }

    fn validate_for(&self, shape: Shape) -> Result<()> {
        self.validate()?;
        if self.patch_h > shape.height || self.patch_w > shape.width {
            return Err(Error::Config(format!(
                "patch {}x{} does not fit in {}x{} frames",
                self.patch_h, self.patch_w, shape.height, shape.width
            )));
        }
        Ok(())
    }
}

/// Patch tiling of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    pub rows: usize,
    pub cols: usize,
    pub patch_h: usize,
    pub patch_w: usize,
}

impl PatchGrid {
    pub fn new(height: usize, width: usize, patch_h: usize, patch_w: usize) -> Self {
        Self {
            rows: height / patch_h,
            cols: width / patch_w,
            patch_h,
            patch_w,
        }
    }

    /// `Kp`.
    pub fn len(&self) -> usize {
        self.rows * self.cols * 3
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(channel, top row, left column)` of a patch.
    pub fn region(&self, index: usize) -> (usize, usize, usize) {
        let col = index % self.cols;
        let row = (index / self.cols) % self.rows;
        let channel = index / (self.cols * self.rows);
        (channel, row * self.patch_h, col * self.patch_w)
    }
}

/// `Z = max(⌊Kp / N⌋, 1)`.
pub fn compute_z(height: usize, width: usize, patch_h: usize, patch_w: usize, n: usize) -> usize {
    let kp = PatchGrid::new(height, width, patch_h, patch_w).len();
    (kp / n.max(1)).max(1)
}

pub fn blackbox_attack<S>(
    video: &VideoTensor,
    scorer: &mut S,
    anchor: &AnchorScore,
    cfg: &BlackBoxConfig,
) -> Result<AttackOutcome>
where
    S: ScorerOracle + ?Sized,
{
    let frames: Vec<usize> = (0..video.frames()).collect();
    run(video, scorer, anchor, cfg, &frames, Mode::Patch)
}

/// Same search loop, one pixel-channel coordinate per query, at most `N`
/// coordinates per round drawn without replacement.
pub fn pixel_baseline_attack<S>(
    video: &VideoTensor,
    scorer: &mut S,
    anchor: &AnchorScore,
    cfg: &BlackBoxConfig,
) -> Result<AttackOutcome>
where
    S: ScorerOracle + ?Sized,
{
    let frames: Vec<usize> = (0..video.frames()).collect();
    run(video, scorer, anchor, cfg, &frames, Mode::Pixel)
}

/// Patch attack on `⌈ratio·X⌉` evenly spaced frames only.
pub fn perturb_subset<S>(
    video: &VideoTensor,
    scorer: &mut S,
    anchor: &AnchorScore,
    cfg: &BlackBoxConfig,
    ratio: f64,
) -> Result<AttackOutcome>
where
    S: ScorerOracle + ?Sized,
{
    let frames = frame_subset(video.frames(), ratio)?;
    run(video, scorer, anchor, cfg, &frames, Mode::Patch)
}

/// Pixel baseline on `⌈ratio·X⌉` evenly spaced frames only.
pub fn pixel_perturb_subset<S>(
    video: &VideoTensor,
    scorer: &mut S,
    anchor: &AnchorScore,
    cfg: &BlackBoxConfig,
    ratio: f64,
) -> Result<AttackOutcome>
where
    S: ScorerOracle + ?Sized,
{
    let frames = frame_subset(video.frames(), ratio)?;
    run(video, scorer, anchor, cfg, &frames, Mode::Pixel)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Patch,
    Pixel,
}

struct Search<'a, S: ?Sized> {
    scorer: &'a mut S,
    anchor: &'a AnchorScore,
    cap: Option<u64>,
    trace: AttackTrace,
}

impl<S: ScorerOracle + ?Sized> Search<'_, S> {
    /// Score `video`, or `None` once the query cap is exhausted.
    fn query(&mut self, video: &VideoTensor) -> Result<Option<(f64, f64)>> {
        if let Some(cap) = self.cap {
            if self.trace.total_queries >= cap {
                self.trace.truncated = true;
                return Ok(None);
            }
        }
        let index = self.trace.total_queries;
        let score = self.scorer.score(video).map_err(|e| match e {
            Error::Scorer { message, .. } => Error::Scorer { query: index, message },
            other => Error::Scorer {
                query: index,
                message: other.to_string(),
            },
        })?;
        self.trace.total_queries += 1;
        Ok(Some((score, srb_loss(score, self.anchor))))
    }
}

fn run<S>(
    video: &VideoTensor,
    scorer: &mut S,
    anchor: &AnchorScore,
    cfg: &BlackBoxConfig,
    frames: &[usize],
    mode: Mode,
) -> Result<AttackOutcome>
where
    S: ScorerOracle + ?Sized,
{
    let shape = video.shape();
    let grid = match mode {
        Mode::Patch => {
            cfg.validate_for(shape)?;
            PatchGrid::new(shape.height, shape.width, cfg.patch_h, cfg.patch_w)
        }
        Mode::Pixel => {
            cfg.validate()?;
            PatchGrid::new(shape.height, shape.width, 1, 1)
        }
    };
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let orig = video.data();
    let mut adv = video.clone();
    let kind = match mode {
        Mode::Patch => AttackKind::Blackbox,
        Mode::Pixel => AttackKind::PixelBaseline,
    };
    let mut search = Search {
        scorer,
        anchor,
        cap: cfg.max_total_queries,
        trace: AttackTrace::new(kind),
    };
    let mut tally = NormTally {
        count: shape.len(),
        ..NormTally::default()
    };
    let kp = grid.len();
    let (z, queries_per_round) = match mode {
        Mode::Patch => {
            let z = (kp / cfg.queries_per_round).max(1);
            (z, kp.div_ceil(z))
        }
        Mode::Pixel => (1, kp.min(cfg.queries_per_round)),
    };
    let map_len = grid.patch_h * grid.patch_w;
    let mut map = vec![0.0f64; map_len];
    let mut saved: Vec<(usize, f32)> = Vec::new();
    let mut retained_score = None;

    'rounds: for (round, group) in frames.chunks(cfg.frames_per_round).enumerate() {
        search.trace.rounds += 1;
        let Some((score, mut best)) = search.query(&adv)? else {
            break;
        };
        retained_score = Some(score);
        search.trace.records.push(TraceRecord {
            round,
            step: 0,
            trial: Trial::Init,
            accepted: None,
            loss: best,
            best_loss: best,
            score,
            pixel_l2: tally.pixel_l2(),
            linf: tally.max_abs,
            patches: Vec::new(),
        });

        let mut order: Vec<u32> = (0..kp as u32).collect();
        order.shuffle(&mut rng);
        for (step, selected) in order.chunks(z).take(queries_per_round).enumerate() {
            for m in map.iter_mut() {
                *m = if rng.gen::<bool>() { cfg.gamma } else { -cfg.gamma };
            }
            for (trial, sign) in [(Trial::Minus, -1.0), (Trial::Plus, 1.0)] {
                let mut candidate = tally;
                saved.clear();
                {
                    let data = adv.data_mut();
                    for &patch in selected {
                        let (ch, r0, c0) = grid.region(patch as usize);
                        for &f in group {
                            for i in 0..grid.patch_h {
                                for j in 0..grid.patch_w {
                                    let p = shape.index(f, r0 + i, c0 + j, ch);
                                    let old = data[p];
                                    let old_delta = old as f64 - orig[p] as f64;
                                    let v = offset_within(
                                        orig[p],
                                        old_delta + sign * map[i * grid.patch_w + j],
                                        cfg.gamma,
                                    );
                                    let new_delta = v as f64 - orig[p] as f64;
                                    candidate.sq_sum += new_delta * new_delta - old_delta * old_delta;
                                    candidate.max_abs = candidate.max_abs.max(new_delta.abs());
                                    saved.push((p, old));
                                    data[p] = v;
                                }
                            }
                        }
                    }
                }
                let Some((score, loss)) = search.query(&adv)? else {
                    restore(&mut adv, &saved);
                    break 'rounds;
                };
                search.trace.search_queries += 1;
                let accepted = loss < best;
                if accepted {
                    best = loss;
                    tally = candidate;
                    retained_score = Some(score);
                } else {
                    restore(&mut adv, &saved);
                }
                let (l2, linf) = if accepted {
                    (tally.pixel_l2(), tally.max_abs)
                } else {
                    (candidate.pixel_l2(), candidate.max_abs)
                };
                search.trace.records.push(TraceRecord {
                    round,
                    step,
                    trial,
                    accepted: Some(accepted),
                    loss,
                    best_loss: best,
                    score,
                    pixel_l2: l2,
                    linf,
                    patches: selected.to_vec(),
                });
                if accepted {
                    break;
                }
            }
        }
    }
    let mut trace = search.trace;
    trace.finish(tally, retained_score, started);
    Ok(AttackOutcome {
        adversarial: adv,
        trace,
    })
}

fn restore(adv: &mut VideoTensor, saved: &[(usize, f32)]) {
    let data = adv.data_mut();
    for &(p, old) in saved.iter().rev() {
        data[p] = old;
    }
}

/// True when, in every round, the queries' patch selections partition the
/// full patch set of an `H×W` frame tiled by `h×w`.
pub fn coverage_check(trace: &AttackTrace, height: usize, width: usize, patch_h: usize, patch_w: usize) -> bool {
    if trace.truncated || patch_h == 0 || patch_w == 0 {
        return false;
    }
    let kp = PatchGrid::new(height, width, patch_h, patch_w).len();
    // round -> query -> selection (the ± trials of a query share one selection)
    let mut rounds: BTreeMap<usize, BTreeMap<usize, &[u32]>> = BTreeMap::new();
    for r in &trace.records {
        let queries = rounds.entry(r.round).or_default();
        if r.trial == Trial::Init {
            continue;
        }
        match queries.get(&r.step) {
            Some(existing) if *existing != r.patches.as_slice() => return false,
            Some(_) => {}
            None => {
                queries.insert(r.step, r.patches.as_slice());
            }
        }
    }
    if rounds.is_empty() {
        return false;
    }
    rounds.values().all(|queries| {
        let mut seen = vec![false; kp];
        for selection in queries.values() {
            for &p in *selection {
                let p = p as usize;
                if p >= kp || seen[p] {
                    return false;
                }
                seen[p] = true;
            }
        }
        seen.iter().all(|&s| s)
    })
}
