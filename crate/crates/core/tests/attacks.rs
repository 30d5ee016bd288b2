//! Attack invariants on randomized shapes and configurations, plus an
//! independent reimplementation of the conv scorer as a gradient oracle.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vqadv::blackbox::{self, coverage_check};
use vqadv::scorers::{check_gradient, ConvParams, ConvScorer, TvScorer};
use vqadv::video::{linf, pixel_l2};
use vqadv::whitebox;
use vqadv::{
    AnchorScore, AttackTrace, BlackBoxConfig, Boundary, DifferentiableScorer, NormBudget, ScorerOracle, StepRule,
    VideoTensor, WhiteBoxConfig,
};

/// Smooth texture around mid-grey with a little noise.
fn textured(x: usize, h: usize, w: usize, seed: u64) -> VideoTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64, [f64; 3])> = (0..6)
        .map(|_| {
            (
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(0.0..6.3),
                [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            )
        })
        .collect();
    let mut data = Vec::with_capacity(x * h * w * 3);
    for f in 0..x {
        for r in 0..h {
            for c in 0..w {
                for ch in 0..3 {
                    let mut v = 0.5;
                    for (kx, ky, ph, col) in &waves {
                        v += 0.05 * col[ch] * (kx * (c + 3 * f) as f64 + ky * r as f64 + ph).sin();
                    }
                    v += rng.gen_range(-0.02..0.02);
                    data.push(v.clamp(0.0, 1.0) as f32);
                }
            }
        }
    }
    VideoTensor::new(x, h, w, data).unwrap()
}

fn check_blackbox_trace(trace: &AttackTrace, gamma: f64) -> Result<(), TestCaseError> {
    prop_assert_eq!(trace.monotonicity_violations(), 0);
    let accepted = trace.accepted_losses();
    prop_assert!(accepted.windows(2).all(|w| w[1] < w[0]));
    let mut best = f64::INFINITY;
    for rec in &trace.records {
        prop_assert!(rec.pixel_l2 <= gamma + 1e-6, "record l2 {}", rec.pixel_l2);
        prop_assert!(rec.linf <= gamma, "record linf {}", rec.linf);
        prop_assert!(rec.best_loss <= best || rec.round > 0);
        best = rec.best_loss;
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn blackbox_invariants(
        x in 1usize..4,
        h in 6usize..40,
        w in 6usize..40,
        ph in 1usize..12,
        pw in 1usize..12,
        n in 1usize..60,
        t in 1usize..4,
        gamma in 1e-3f64..0.05,
        seed in any::<u64>(),
        low_quality in any::<bool>(),
    ) {
        let (ph, pw) = (ph.min(h), pw.min(w));
        let video = textured(x, h, w, seed);
        let mut scorer = ConvScorer::new(seed % 7);
        let anchor = AnchorScore::unscaled(if low_quality { Boundary::One } else { Boundary::Zero });
        let cfg = BlackBoxConfig {
            queries_per_round: n,
            frames_per_round: t,
            gamma,
            patch_h: ph,
            patch_w: pw,
            seed,
            max_total_queries: None,
        };
        let out = blackbox::blackbox_attack(&video, &mut scorer, &anchor, &cfg).unwrap();
        let trace = &out.trace;
        check_blackbox_trace(trace, gamma)?;
        prop_assert!(coverage_check(trace, h, w, ph, pw));
        prop_assert_eq!(scorer.query_count(), trace.total_queries);
        prop_assert_eq!(trace.total_queries as usize, trace.records.len());
        prop_assert!(pixel_l2(&video, &out.adversarial).unwrap() <= gamma + 1e-6);
        prop_assert!(linf(&video, &out.adversarial).unwrap() <= gamma);
        prop_assert!(out.adversarial.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let rescored = ConvScorer::new(seed % 7).score(&out.adversarial).unwrap();
        prop_assert_eq!(trace.final_score, Some(rescored));
        prop_assert_eq!(trace.rounds, x.div_ceil(t));
    }

    #[test]
    fn pixel_baseline_invariants(
        h in 4usize..20,
        w in 4usize..20,
        n in 1usize..200,
        gamma in 1e-3f64..0.05,
        seed in any::<u64>(),
    ) {
        let video = textured(2, h, w, seed);
        let mut scorer = TvScorer::new();
        let anchor = AnchorScore::unscaled(Boundary::Zero);
        let cfg = BlackBoxConfig { queries_per_round: n, gamma, seed, ..BlackBoxConfig::default() };
        let out = blackbox::pixel_baseline_attack(&video, &mut scorer, &anchor, &cfg).unwrap();
        check_blackbox_trace(&out.trace, gamma)?;
        prop_assert!(linf(&video, &out.adversarial).unwrap() <= gamma);
        let per_round = n.min(h * w * 3) as u64;
        prop_assert!(out.trace.search_queries <= 2 * per_round * 2);
        let changed = video.data().iter().zip(out.adversarial.data()).filter(|(a, b)| a != b).count();
        prop_assert!(changed <= out.trace.accepted_count());
    }

    #[test]
    fn whitebox_invariants(
        x in 1usize..5,
        h in 4usize..16,
        w in 4usize..16,
        t in 1usize..4,
        k in 1usize..6,
        eps_l2 in 1e-3f64..0.02,
        eps_linf in 1e-3f64..0.05,
        steepest in any::<bool>(),
        ratio in 0.05f64..=1.0,
        seed in any::<u64>(),
    ) {
        let video = textured(x, h, w, seed);
        let mut scorer = ConvScorer::new(seed % 5);
        let cfg = WhiteBoxConfig {
            iterations: k,
            frames_per_round: t,
            step_size: 3e-3,
            budget: NormBudget::new(eps_l2, eps_linf).unwrap(),
            step_rule: if steepest { StepRule::SteepestDescent } else { StepRule::AdaptiveMoments },
            seed,
        };
        let anchor = AnchorScore::unscaled(Boundary::One);
        let out = whitebox::perturb_subset(&video, &mut scorer, &anchor, &cfg, ratio).unwrap();
        for rec in &out.trace.records {
            prop_assert!(cfg.budget.admits(rec.pixel_l2, rec.linf));
        }
        prop_assert!(cfg.budget.admits(
            pixel_l2(&video, &out.adversarial).unwrap(),
            linf(&video, &out.adversarial).unwrap()
        ));
        prop_assert!(out.adversarial.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let attacked = vqadv::video::frame_subset(x, ratio).unwrap();
        for f in (0..x).filter(|f| !attacked.contains(f)) {
            prop_assert_eq!(video.frame(f), out.adversarial.frame(f));
        }
        prop_assert_eq!(scorer.query_count(), out.trace.total_queries);
    }
}

/// Vertical stripes on a dark background, drifting 2 px per frame. Every
/// 3×3 window sees a 0, 1/3, 2/3 or full share of a stripe, which keeps all
/// pre-activations clear of the ReLU kink for the default conv scorer.
fn stripes(x: usize, h: usize, w: usize) -> VideoTensor {
    let mut data = Vec::with_capacity(x * h * w * 3);
    for f in 0..x {
        for _ in 0..h {
            for c in 0..w {
                let v = if (c + 2 * f) % 16 < 5 { 0.7 } else { 0.2 };
                data.extend([v; 3]);
            }
        }
    }
    VideoTensor::new(x, h, w, data).unwrap()
}

/// Direct f64 evaluation of the conv scorer's definition.
fn reference_score(p: &ConvParams, x: usize, h: usize, w: usize, data: &[f64]) -> f64 {
    let at = |f: usize, r: isize, c: isize, ch: usize| -> f64 {
        if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
            0.0
        } else {
            data[((f * h + r as usize) * w + c as usize) * 3 + ch]
        }
    };
    let mut total = 0.0;
    for f in 0..x {
        for ch in 0..3 {
            for r in 0..h as isize {
                for c in 0..w as isize {
                    let mut u = p.conv_bias[ch];
                    for di in 0..3 {
                        for dj in 0..3 {
                            u += p.kernels[ch][di * 3 + dj] * at(f, r + di as isize - 1, c + dj as isize - 1, ch);
                        }
                    }
                    total += u.max(0.0);
                }
            }
        }
    }
    let m = total / (x * h * w * 3) as f64;
    1.0 / (1.0 + (-(p.out_weight * m + p.out_bias)).exp())
}

#[test]
fn conv_matches_reference_value_and_finite_differences() {
    let (x, h, w) = (2, 32, 32);
    let video = stripes(x, h, w);
    let mut scorer = ConvScorer::new(0);
    let params = scorer.params().clone();
    let data: Vec<f64> = video.data().iter().map(|&v| v as f64).collect();

    let (value, grad) = scorer.value_and_gradient(&video).unwrap();
    let reference = reference_score(&params, x, h, w, &data);
    assert!((value - reference).abs() <= 1e-12, "{value} vs {reference}");
    assert!(value > 1e-3 && value < 1.0 - 1e-3, "score {value} saturated");

    let margin = scorer.min_abs_preactivation(&video).unwrap();
    assert!(margin > 1e-3);
    let step = 1e-6;
    let mut worst: f64 = 0.0;
    let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    for i in 0..data.len() {
        let mut plus = data.clone();
        let mut minus = data.clone();
        plus[i] += step;
        minus[i] -= step;
        let fd = (reference_score(&params, x, h, w, &plus) - reference_score(&params, x, h, w, &minus)) / (2.0 * step);
        let denom = grad[i].abs().max(fd.abs()).max(1e-3 * scale);
        worst = worst.max((grad[i] - fd).abs() / denom);
    }
    assert!(worst < 1e-5, "max relative error {worst}");
}

#[test]
fn library_gradient_check_agrees_on_conv() {
    let video = stripes(2, 32, 32);
    let mut scorer = ConvScorer::new(0);
    assert!(scorer.min_abs_preactivation(&video).unwrap() > 1e-3);
    let score = scorer.score(&video).unwrap();
    assert!(score > 0.05 && score < 0.95, "score {score} saturated");
    let err = check_gradient(&mut scorer, &video, 100, 1e-3, 5).unwrap();
    assert!(err < 1e-4, "relative error {err}");
}
