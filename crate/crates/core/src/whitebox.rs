//! Gradient-based attack under pixel-level L2 and L∞ budgets.
//!
//! Frames are attacked in rounds of `T`. Each round starts from a random
//! perturbation with entries in `{−1/255, 0, 1/255}`, then runs `K`
//! iterations of: gradient of the boundary loss, one step, projection onto
//! the budget, clamp to `[0, 1]`. The scorer always sees the full video.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{srb_loss, AnchorScore};
use crate::scorers::DifferentiableScorer;
use crate::trace::{AttackKind, AttackOutcome, AttackTrace, NormTally, Trial, TraceRecord};
use crate::video::{frame_subset, offset_within, project_in_place, NormBudget, VideoTensor};

const INIT_LEVEL: f32 = 1.0 / 255.0;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Step of RMS size `beta` along the normalised negative gradient.
    SteepestDescent,
    /// Adam with decay rates 0.9 / 0.999 and stabiliser 1e-8.
    AdaptiveMoments,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WhiteBoxConfig {
    /// Iterations per round (`K`).
    pub iterations: usize,
    /// Frames per round (`T`).
    pub frames_per_round: usize,
    /// Step size (`β`).
    pub step_size: f64,
    pub budget: NormBudget,
    pub step_rule: StepRule,
    pub seed: u64,
}

impl Default for WhiteBoxConfig {
    fn default() -> Self {
        Self {
            iterations: 30,
            frames_per_round: 1,
            step_size: 3e-4,
            budget: NormBudget {
                eps_l2: 1.0 / 255.0,
                eps_linf: 3.0 / 255.0,
            },
            step_rule: StepRule::AdaptiveMoments,
            seed: 0,
        }
    }
}

impl WhiteBoxConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("white-box iterations K must be at least 1".into()));
        }
        if self.frames_per_round == 0 {
            return Err(Error::Config("frames per round T must be at least 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!("step size must be positive, got {}", self.step_size)));
        }
        self.budget.validate()
    }
}

pub fn whitebox_attack<S>(
    video: &VideoTensor,
    scorer: &mut S,
    anchor: &AnchorScore,
    cfg: &WhiteBoxConfig,
) -> Result<AttackOutcome>
where
    S: DifferentiableScorer + ?Sized,
{
    let frames: Vec<usize> = (0..video.frames()).collect();
    run(video, scorer, anchor, cfg, &frames)
}

/// Attack only `⌈ratio·X⌉` evenly spaced frames; all other frames are left
/// bit-identical to the input.
pub fn perturb_subset<S>(
    video: &VideoTensor,
    scorer: &mut S,
    anchor: &AnchorScore,
    cfg: &WhiteBoxConfig,
    ratio: f64,
) -> Result<AttackOutcome>
where
    S: DifferentiableScorer + ?Sized,
{
    let frames = frame_subset(video.frames(), ratio)?;
    run(video, scorer, anchor, cfg, &frames)
}

fn run<S>(
    video: &VideoTensor,
    scorer: &mut S,
    anchor: &AnchorScore,
    cfg: &WhiteBoxConfig,
    frames: &[usize],
) -> Result<AttackOutcome>
where
    S: DifferentiableScorer + ?Sized,
{
    cfg.validate()?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shape = video.shape();
    let frame_len = shape.frame_len();
    let orig = video.data();
    let mut adv = video.clone();
    let mut trace = AttackTrace::new(AttackKind::Whitebox);
    let mut done = NormTally {
        count: shape.len(),
        ..NormTally::default()
    };

    for (round, group) in frames.chunks(cfg.frames_per_round).enumerate() {
        trace.rounds += 1;
        // element offsets of this round, in group order
        let positions: Vec<usize> = group
            .iter()
            .flat_map(|&f| f * frame_len..(f + 1) * frame_len)
            .collect();
        let mut delta: Vec<f32> = positions
            .iter()
            .map(|_| match rng.gen_range(0..3) {
                0 => -INIT_LEVEL,
                1 => 0.0,
                _ => INIT_LEVEL,
            })
            .collect();
        let mut optimizer = Optimizer::new(cfg.step_rule, positions.len());

        let mut tally = write_round(&mut adv, orig, &positions, &mut delta, &cfg.budget, done);
        for iteration in 0..=cfg.iterations {
            let last = iteration == cfg.iterations;
            let (score, grad) = if last {
                (query(scorer.score(&adv), &trace)?, Vec::new())
            } else {
                query(scorer.value_and_gradient(&adv), &trace)?
            };
            trace.total_queries += 1;
            trace.search_queries += 1;
            let loss = srb_loss(score, anchor);
            trace.records.push(TraceRecord {
                round,
                step: iteration,
                trial: Trial::Step,
                accepted: None,
                loss,
                best_loss: loss,
                score,
                pixel_l2: tally.pixel_l2(),
                linf: tally.max_abs,
                patches: Vec::new(),
            });
            if last {
                break;
            }
            let direction = (score - anchor.scaled_value).signum();
            let direction = if score == anchor.scaled_value { 0.0 } else { direction };
            let mut loss_grad = Vec::with_capacity(positions.len());
            for &p in &positions {
                let g = direction * grad[p];
                if !g.is_finite() {
                    return Err(Error::Numeric { round, iteration });
                }
                loss_grad.push(g);
            }
            optimizer.step(&mut delta, &loss_grad, cfg.step_size);
            tally = write_round(&mut adv, orig, &positions, &mut delta, &cfg.budget, done);
        }
        done = tally;
    }
    let score = trace.records.last().map(|r| r.score);
    trace.finish(done, score, started);
    Ok(AttackOutcome {
        adversarial: adv,
        trace,
    })
}

fn query<T>(result: Result<T>, trace: &AttackTrace) -> Result<T> {
    result.map_err(|e| match e {
        Error::Numeric { .. } => e,
        other => Error::Scorer {
            query: trace.total_queries,
            message: other.to_string(),
        },
    })
}

/// Project `delta`, write `clamp01(orig + delta)` into `adv`, resync `delta`
/// to the stored difference, and return whole-video norms.
fn write_round(
    adv: &mut VideoTensor,
    orig: &[f32],
    positions: &[usize],
    delta: &mut [f32],
    budget: &NormBudget,
    before: NormTally,
) -> NormTally {
    project_in_place(delta, budget);
    let data = adv.data_mut();
    let mut tally = before;
    for (d, &p) in delta.iter_mut().zip(positions) {
        let v = offset_within(orig[p], *d as f64, budget.eps_linf);
        data[p] = v;
        let stored = v as f64 - orig[p] as f64;
        *d = stored as f32;
        tally.sq_sum += stored * stored;
        tally.max_abs = tally.max_abs.max(stored.abs());
    }
    tally
}

enum Optimizer {
    Steepest,
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
}

impl Optimizer {
    fn new(rule: StepRule, len: usize) -> Self {
        match rule {
            StepRule::SteepestDescent => Optimizer::Steepest,
            StepRule::AdaptiveMoments => Optimizer::Adam {
                m: vec![0.0; len],
                v: vec![0.0; len],
                t: 0,
            },
        }
    }

    fn step(&mut self, delta: &mut [f32], grad: &[f64], beta: f64) {
        match self {
            Optimizer::Steepest => {
                let rms = (grad.iter().map(|g| g * g).sum::<f64>() / grad.len() as f64).sqrt();
                if rms == 0.0 {
                    return;
                }
                for (d, g) in delta.iter_mut().zip(grad) {
                    *d = (*d as f64 - beta * g / rms) as f32;
                }
            }
            Optimizer::Adam { m, v, t } => {
                *t += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(*t);
                let c2 = 1.0 - ADAM_BETA2.powi(*t);
                for i in 0..delta.len() {
                    let g = grad[i];
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
                    let update = beta * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                    delta[i] = (delta[i] as f64 - update) as f32;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::Boundary;
    use crate::scorers::{ConstScorer, ScorerOracle, TvScorer};
    use crate::video::{linf, pixel_l2};

    fn noisy(x: usize, h: usize, w: usize) -> VideoTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = (0..x * h * w * 3).map(|_| rng.gen_range(0.45f32..0.55)).collect();
        VideoTensor::new(x, h, w, data).unwrap()
    }

    #[test]
    fn const_scorer_loss_never_moves() {
        let v = noisy(2, 6, 6);
        let anchor = AnchorScore::unscaled(Boundary::Zero);
        let cfg = WhiteBoxConfig::default();
        let mut s = ConstScorer::new(0.6);
        let out = whitebox_attack(&v, &mut s, &anchor, &cfg).unwrap();
        assert!(out.trace.records.iter().all(|r| r.loss == 0.6));
        assert_eq!(s.query_count(), out.trace.total_queries);
        assert_eq!(out.trace.records.len(), 2 * (cfg.iterations + 1));
    }

    #[test]
    fn budget_respected_every_record() {
        let v = noisy(3, 8, 8);
        let anchor = AnchorScore::unscaled(Boundary::One);
        for rule in [StepRule::AdaptiveMoments, StepRule::SteepestDescent] {
            let cfg = WhiteBoxConfig {
                step_rule: rule,
                frames_per_round: 2,
                ..WhiteBoxConfig::default()
            };
            let out = whitebox_attack(&v, &mut TvScorer::new(), &anchor, &cfg).unwrap();
            for r in &out.trace.records {
                assert!(cfg.budget.admits(r.pixel_l2, r.linf));
            }
            let adv = &out.adversarial;
            assert!(adv.data().iter().all(|x| (0.0..=1.0).contains(x)));
            assert!(cfg.budget.admits(pixel_l2(&v, adv).unwrap(), linf(&v, adv).unwrap()));
            // 3 frames, T = 2: rounds of 2 and 1
            assert_eq!(out.trace.rounds, 2);
        }
    }

    #[test]
    fn trace_norms_match_output() {
        let v = noisy(2, 6, 6);
        let anchor = AnchorScore::unscaled(Boundary::One);
        let out = whitebox_attack(&v, &mut TvScorer::new(), &anchor, &WhiteBoxConfig::default()).unwrap();
        let last = out.trace.records.last().unwrap();
        assert!((last.pixel_l2 - pixel_l2(&v, &out.adversarial).unwrap()).abs() < 1e-9);
        assert!((last.linf - linf(&v, &out.adversarial).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn seed_determinism() {
        let v = noisy(2, 6, 6);
        let anchor = AnchorScore::unscaled(Boundary::One);
        let cfg = WhiteBoxConfig {
            seed: 9,
            ..WhiteBoxConfig::default()
        };
        let a = whitebox_attack(&v, &mut TvScorer::new(), &anchor, &cfg).unwrap();
        let b = whitebox_attack(&v, &mut TvScorer::new(), &anchor, &cfg).unwrap();
        assert_eq!(a.adversarial, b.adversarial);
        assert_eq!(a.trace.records, b.trace.records);
    }

    #[test]
    fn subset_leaves_other_frames_untouched() {
        let v = noisy(10, 5, 5);
        let anchor = AnchorScore::unscaled(Boundary::One);
        let cfg = WhiteBoxConfig::default();
        let out = perturb_subset(&v, &mut TvScorer::new(), &anchor, &cfg, 0.1).unwrap();
        let changed: Vec<usize> = (0..10)
            .filter(|&f| v.frame(f) != out.adversarial.frame(f))
            .collect();
        assert_eq!(changed.len(), 1);
        assert_eq!(out.trace.rounds, 1);
        assert!(perturb_subset(&v, &mut TvScorer::new(), &anchor, &cfg, 0.0).is_err());
    }

    #[test]
    fn full_ratio_matches_plain_attack() {
        let v = noisy(3, 5, 5);
        let anchor = AnchorScore::unscaled(Boundary::Zero);
        let cfg = WhiteBoxConfig::default();
        let a = whitebox_attack(&v, &mut TvScorer::new(), &anchor, &cfg).unwrap();
        let b = perturb_subset(&v, &mut TvScorer::new(), &anchor, &cfg, 1.0).unwrap();
        assert_eq!(a.adversarial, b.adversarial);
    }

    #[test]
    fn invalid_config() {
        let v = noisy(1, 4, 4);
        let anchor = AnchorScore::unscaled(Boundary::Zero);
        for cfg in [
            WhiteBoxConfig { iterations: 0, ..Default::default() },
            WhiteBoxConfig { frames_per_round: 0, ..Default::default() },
            WhiteBoxConfig { step_size: 0.0, ..Default::default() },
        ] {
            assert!(matches!(
                whitebox_attack(&v, &mut TvScorer::new(), &anchor, &cfg),
                Err(Error::Config(_))
            ));
        }
    }

    struct NanScorer(u64);

    impl ScorerOracle for NanScorer {
        fn score(&mut self, _: &VideoTensor) -> Result<f64> {
            self.0 += 1;
            Ok(0.5)
        }
        fn query_count(&self) -> u64 {
            self.0
        }
    }

    impl DifferentiableScorer for NanScorer {
        fn value_and_gradient(&mut self, v: &VideoTensor) -> Result<(f64, Vec<f64>)> {
            self.0 += 1;
            Ok((0.5, vec![f64::NAN; v.len()]))
        }
    }

    #[test]
    fn nan_gradient_reports_context() {
        let v = noisy(1, 4, 4);
        let anchor = AnchorScore::unscaled(Boundary::Zero);
        let err = whitebox_attack(&v, &mut NanScorer(0), &anchor, &WhiteBoxConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Numeric { round: 0, iteration: 0 }));
    }
}
