//! A small differentiable scorer: per-channel 3×3 convolution → ReLU →
//! global mean → affine → logistic.
//!
//! The backward pass is hand-written reverse-mode accumulation through this
//! fixed graph. Forward sums are organised per output row and reduced in a
//! fixed order; the scorer caches row sums of the last input and recomputes
//! only rows whose receptive field changed, which keeps the result
//! bit-identical to a cold evaluation.

use super::prng::XorShift64Star;
use super::{logistic, DifferentiableScorer, ScorerOracle};
use crate::error::{Error, Result};
use crate::video::{Shape, VideoTensor, CHANNELS};

/// Weights of the conv scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    /// Row-major 3×3 kernel per channel, applied as a correlation.
    pub kernels: [[f64; 9]; CHANNELS],
    pub conv_bias: [f64; CHANNELS],
    pub out_weight: f64,
    pub out_bias: f64,
}

// Kernel = HIGHPASS_GAIN·(r − mean r) + dc/9 with r ~ U[-1, 1)^9 and
// dc ~ U[DC_LO, DC_HI). The conv bias puts the ReLU threshold at an
// intensity drawn from U[THRESH_LO, THRESH_HI), so an all-zero input never
// activates. The output affine maps the mean activation MEAN_CENTER to a
// logit near zero with gain ~ U[GAIN_LO, GAIN_HI), negated so that stronger
// response lowers the score. MEAN_CENTER and the gain are set so the default
// synthetic batch spreads over the middle of (0, 1).
const HIGHPASS_GAIN: f64 = 0.03;
const DC_LO: f64 = 0.3;
const DC_HI: f64 = 0.6;
const THRESH_LO: f64 = 0.45;
const THRESH_HI: f64 = 0.55;
const GAIN_LO: f64 = 8279.0;
const GAIN_HI: f64 = 13798.0;
const MEAN_CENTER: f64 = 0.015023;

impl ConvParams {
    /// Deterministic weights from an xorshift64* stream.
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = XorShift64Star::new(seed);
        let mut kernels = [[0.0; 9]; CHANNELS];
        let mut conv_bias = [0.0; CHANNELS];
        for (kernel, bias) in kernels.iter_mut().zip(conv_bias.iter_mut()) {
            let r: Vec<f64> = (0..9).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let mean = r.iter().sum::<f64>() / 9.0;
            let dc = rng.uniform(DC_LO, DC_HI);
            for (k, ri) in kernel.iter_mut().zip(&r) {
                *k = HIGHPASS_GAIN * (ri - mean) + dc / 9.0;
            }
            *bias = -dc * rng.uniform(THRESH_LO, THRESH_HI);
        }
        let out_weight = -rng.uniform(GAIN_LO, GAIN_HI);
        let out_bias = -out_weight * MEAN_CENTER;
        Self {
            kernels,
            conv_bias,
            out_weight,
            out_bias,
        }
    }
}

#[derive(Debug, Clone)]
struct RowCache {
    shape: Shape,
    input: Vec<f32>,
    /// Σ_col ReLU(u) indexed by `(frame·3 + channel)·H + row`.
    row_sums: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvScorer {
    params: ConvParams,
    queries: u64,
    cache: Option<RowCache>,
}

impl ConvScorer {
    pub fn new(seed: u64) -> Self {
        Self::from_params(ConvParams::from_seed(seed))
    }

    pub fn from_params(params: ConvParams) -> Self {
        Self {
            params,
            queries: 0,
            cache: None,
        }
    }

    pub fn params(&self) -> &ConvParams {
        &self.params
    }

    /// Smallest `|u|` over all pre-activations: the distance to the nearest
    /// ReLU kink. Useful for choosing finite-difference steps.
    pub fn min_abs_preactivation(&self, video: &VideoTensor) -> Result<f64> {
        check_shape(video)?;
        let s = video.shape();
        let mut row = vec![0.0; s.width];
        let mut min = f64::INFINITY;
        for f in 0..s.frames {
            for ch in 0..CHANNELS {
                for r in 0..s.height {
                    self.preactivations(video.data(), s, f, ch, r, &mut row);
                    min = row.iter().fold(min, |m, u| m.min(u.abs()));
                }
            }
        }
        Ok(min)
    }

    /// Pre-activations of one output row, `u = β + Σ k·x` with zero padding.
    fn preactivations(&self, data: &[f32], s: Shape, f: usize, ch: usize, r: usize, out: &mut [f64]) {
        let w = s.width;
        let kernel = &self.params.kernels[ch];
        out.fill(self.params.conv_bias[ch]);
        for di in 0..3 {
            let rr = r as isize + di as isize - 1;
            if rr < 0 || rr >= s.height as isize {
                continue;
            }
            let base = s.index(f, rr as usize, 0, 0);
            let src = &data[base + ch..base + w * CHANNELS];
            for dj in 0..3 {
                let k = kernel[di * 3 + dj];
                match dj {
                    0 => {
                        for col in 1..w {
                            out[col] += k * src[(col - 1) * CHANNELS] as f64;
                        }
                    }
                    1 => {
                        for col in 0..w {
                            out[col] += k * src[col * CHANNELS] as f64;
                        }
                    }
                    _ => {
                        for col in 0..w - 1 {
                            out[col] += k * src[(col + 1) * CHANNELS] as f64;
                        }
                    }
                }
            }
        }
    }

    fn row_sum(&self, data: &[f32], s: Shape, f: usize, ch: usize, r: usize, buf: &mut [f64]) -> f64 {
        self.preactivations(data, s, f, ch, r, buf);
        buf.iter().map(|&u| u.max(0.0)).sum()
    }

    fn row_slot(s: Shape, f: usize, ch: usize, r: usize) -> usize {
        (f * CHANNELS + ch) * s.height + r
    }

    /// Mean activation, reusing cached rows where the input is unchanged.
    fn mean_activation(&mut self, video: &VideoTensor) -> f64 {
        let s = video.shape();
        let data = video.data();
        let mut buf = vec![0.0; s.width];
        let row_len = s.width * CHANNELS;

        let mut cache = match self.cache.take() {
            Some(c) if c.shape == s => c,
            _ => {
                let mut row_sums = vec![0.0; s.frames * CHANNELS * s.height];
                for f in 0..s.frames {
                    for ch in 0..CHANNELS {
                        for r in 0..s.height {
                            row_sums[Self::row_slot(s, f, ch, r)] =
                                self.row_sum(data, s, f, ch, r, &mut buf);
                        }
                    }
                }
                RowCache {
                    shape: s,
                    input: data.to_vec(),
                    row_sums,
                }
            }
        };

        let mut dirty = vec![false; s.frames * s.height];
        for f in 0..s.frames {
            for r in 0..s.height {
                let start = s.index(f, r, 0, 0);
                let range = start..start + row_len;
                if cache.input[range.clone()] != data[range.clone()] {
                    cache.input[range.clone()].copy_from_slice(&data[range]);
                    for rr in r.saturating_sub(1)..(r + 2).min(s.height) {
                        dirty[f * s.height + rr] = true;
                    }
                }
            }
        }
        for f in 0..s.frames {
            for r in 0..s.height {
                if dirty[f * s.height + r] {
                    for ch in 0..CHANNELS {
                        cache.row_sums[Self::row_slot(s, f, ch, r)] =
                            self.row_sum(data, s, f, ch, r, &mut buf);
                    }
                }
            }
        }

        let total: f64 = cache.row_sums.iter().sum();
        self.cache = Some(cache);
        total / s.len() as f64
    }

    fn evaluate(&mut self, video: &VideoTensor) -> Result<f64> {
        check_shape(video)?;
        self.queries += 1;
        let m = self.mean_activation(video);
        Ok(logistic(self.params.out_weight * m + self.params.out_bias))
    }
}

fn check_shape(video: &VideoTensor) -> Result<()> {
    if video.height() < 3 || video.width() < 3 {
        return Err(Error::Dimension(format!(
            "conv scorer needs frames of at least 3x3, got {}x{}",
            video.height(),
            video.width()
        )));
    }
    Ok(())
}

impl ScorerOracle for ConvScorer {
    fn score(&mut self, video: &VideoTensor) -> Result<f64> {
        self.evaluate(video)
    }

    fn query_count(&self) -> u64 {
        self.queries
    }
}

impl DifferentiableScorer for ConvScorer {
    fn value_and_gradient(&mut self, video: &VideoTensor) -> Result<(f64, Vec<f64>)> {
        let score = self.evaluate(video)?;
        let s = video.shape();
        let data = video.data();
        // d score / d u for an active unit
        let upstream = score * (1.0 - score) * self.params.out_weight / s.len() as f64;
        let mut grad = vec![0.0f64; s.len()];
        let mut row = vec![0.0; s.width];
        for f in 0..s.frames {
            for ch in 0..CHANNELS {
                let kernel = self.params.kernels[ch];
                for r in 0..s.height {
                    self.preactivations(data, s, f, ch, r, &mut row);
                    for (col, &u) in row.iter().enumerate() {
                        if u <= 0.0 {
                            continue;
                        }
                        for di in 0..3 {
                            let rr = r as isize + di as isize - 1;
                            if rr < 0 || rr >= s.height as isize {
                                continue;
                            }
                            for dj in 0..3 {
                                let cc = col as isize + dj as isize - 1;
                                if cc < 0 || cc >= s.width as isize {
                                    continue;
                                }
                                grad[s.index(f, rr as usize, cc as usize, ch)] +=
                                    kernel[di * 3 + dj] * upstream;
                            }
                        }
                    }
                }
            }
        }
        Ok((score, grad))
    }
}
