use super::{DifferentiableScorer, ScorerOracle};
use crate::error::Result;
use crate::video::{VideoTensor, CHANNELS};

/// Penalty per unit of total variation.
pub const TV_WEIGHT: f64 = 4.0;

/// `max(0, 1 − 4·TV)`, where TV is the mean absolute horizontal neighbour
/// difference plus the mean absolute vertical neighbour difference.
///
/// The gradient is the subgradient with `sign(0) = 0`, and zero wherever the
/// score is clamped.
#[derive(Debug, Clone, Default)]
pub struct TvScorer {
    queries: u64,
}

impl TvScorer {
    pub fn new() -> Self {
        Self::default()
    }
}

fn pair_counts(video: &VideoTensor) -> (usize, usize) {
    let (x, h, w) = (video.frames(), video.height(), video.width());
    (
        x * h * w.saturating_sub(1) * CHANNELS,
        x * h.saturating_sub(1) * w * CHANNELS,
    )
}

/// Mean absolute horizontal plus vertical neighbour difference.
pub fn total_variation(video: &VideoTensor) -> f64 {
    let s = video.shape();
    let d = video.data();
    let (nh, nv) = pair_counts(video);
    let mut sum_h = 0.0f64;
    let mut sum_v = 0.0f64;
    for f in 0..s.frames {
        for r in 0..s.height {
            for c in 0..s.width {
                for ch in 0..CHANNELS {
                    let here = d[s.index(f, r, c, ch)] as f64;
                    if c + 1 < s.width {
                        sum_h += (d[s.index(f, r, c + 1, ch)] as f64 - here).abs();
                    }
                    if r + 1 < s.height {
                        sum_v += (d[s.index(f, r + 1, c, ch)] as f64 - here).abs();
                    }
                }
            }
        }
    }
    let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
    mean(sum_h, nh) + mean(sum_v, nv)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl ScorerOracle for TvScorer {
    fn score(&mut self, video: &VideoTensor) -> Result<f64> {
        self.queries += 1;
        Ok((1.0 - TV_WEIGHT * total_variation(video)).max(0.0))
    }

    fn query_count(&self) -> u64 {
        self.queries
    }
}

impl DifferentiableScorer for TvScorer {
    fn value_and_gradient(&mut self, video: &VideoTensor) -> Result<(f64, Vec<f64>)> {
        let score = self.score(video)?;
        let mut grad = vec![0.0f64; video.len()];
        if score <= 0.0 {
            return Ok((score, grad));
        }
        let s = video.shape();
        let d = video.data();
        let (nh, nv) = pair_counts(video);
        let gh = if nh == 0 { 0.0 } else { -TV_WEIGHT / nh as f64 };
        let gv = if nv == 0 { 0.0 } else { -TV_WEIGHT / nv as f64 };
        for f in 0..s.frames {
            for r in 0..s.height {
                for c in 0..s.width {
                    for ch in 0..CHANNELS {
                        let i = s.index(f, r, c, ch);
                        let here = d[i] as f64;
                        if c + 1 < s.width {
                            let j = s.index(f, r, c + 1, ch);
                            let sg = sign(d[j] as f64 - here);
                            grad[j] += gh * sg;
                            grad[i] -= gh * sg;
                        }
                        if r + 1 < s.height {
                            let j = s.index(f, r + 1, c, ch);
                            let sg = sign(d[j] as f64 - here);
                            grad[j] += gv * sg;
                            grad[i] -= gv * sg;
                        }
                    }
                }
            }
        }
        Ok((score, grad))
    }
}
