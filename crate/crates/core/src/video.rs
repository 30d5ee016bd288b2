//! Video tensors, perturbations, and the norm arithmetic shared by both attacks.
//!
//! Layout is frame-major, row-major within a frame, channel-interleaved
//! (`X × H × W × 3`). Norms are accumulated in `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

/// Shape of a video: frame count, height and width in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(frames: usize, height: usize, width: usize) -> Self {
        Self {
            frames,
            height,
            width,
        }
    }

    /// Elements per frame, `H·W·3`.
    pub fn frame_len(&self) -> usize {
        self.height * self.width * CHANNELS
    }

    pub fn len(&self) -> usize {
        self.frames * self.frame_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, frame: usize, row: usize, col: usize, channel: usize) -> usize {
        ((frame * self.height + row) * self.width + col) * CHANNELS + channel
    }

    fn checked_len(frames: usize, height: usize, width: usize) -> Option<usize> {
        frames
            .checked_mul(height)?
            .checked_mul(width)?
            .checked_mul(CHANNELS)
    }
}

/// An `X × H × W × 3` video with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTensor {
    shape: Shape,
    data: Vec<f32>,
}

impl VideoTensor {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "video dimensions must be positive, got {frames}x{height}x{width}"
            )));
        }
        let expected = Shape::checked_len(frames, height, width).ok_or_else(|| {
            Error::Dimension(format!("shape {frames}x{height}x{width}x3 overflows"))
        })?;
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "data length {} does not match {frames}x{height}x{width}x3 = {expected}",
                data.len()
            )));
        }
        Ok(Self {
            shape: Shape::new(frames, height, width),
            data,
        })
    }

    pub fn filled(frames: usize, height: usize, width: usize, value: f32) -> Result<Self> {
        let len = Shape::checked_len(frames, height, width)
            .ok_or_else(|| Error::Dimension("shape overflows".into()))?;
        Self::new(frames, height, width, vec![value; len])
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn frames(&self) -> usize {
        self.shape.frames
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frame(&self, index: usize) -> &[f32] {
        let n = self.shape.frame_len();
        &self.data[index * n..(index + 1) * n]
    }

    #[inline]
    pub fn at(&self, frame: usize, row: usize, col: usize, channel: usize) -> f32 {
        self.data[self.shape.index(frame, row, col, channel)]
    }

    pub fn ensure_same_shape(&self, other: &VideoTensor) -> Result<()> {
        ensure_shape(self.shape, other.shape)
    }

    /// Copy of `self` with `frames` replaced by the corresponding frames of `source`.
    pub fn with_frames_from(&self, source: &VideoTensor, frames: &[usize]) -> Result<Self> {
        self.ensure_same_shape(source)?;
        let mut out = self.clone();
        let n = self.shape.frame_len();
        for &f in frames {
            if f >= self.frames() {
                return Err(Error::Dimension(format!("frame {f} out of range")));
            }
            out.data[f * n..(f + 1) * n].copy_from_slice(&source.data[f * n..(f + 1) * n]);
        }
        Ok(out)
    }
}

fn ensure_shape(a: Shape, b: Shape) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!(
            "shape {}x{}x{} differs from {}x{}x{}",
            a.frames, a.height, a.width, b.frames, b.height, b.width
        )));
    }
    Ok(())
}

/// Signed additive perturbation with the same layout as the video it targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    shape: Shape,
    data: Vec<f32>,
}

impl Perturbation {
    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn from_data(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::Dimension(format!(
                "perturbation length {} does not match shape length {}",
                data.len(),
                shape.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// `adv − orig`, elementwise.
    pub fn between(orig: &VideoTensor, adv: &VideoTensor) -> Result<Self> {
        orig.ensure_same_shape(adv)?;
        let data = adv
            .data
            .iter()
            .zip(&orig.data)
            .map(|(a, o)| a - o)
            .collect();
        Ok(Self {
            shape: orig.shape,
            data,
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn scaled(&self, factor: f32) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|d| d * factor).collect(),
        }
    }

    pub fn pixel_l2(&self) -> f64 {
        rms(self.data.iter().map(|&d| d as f64))
    }

    pub fn linf(&self) -> f64 {
        self.data
            .iter()
            .fold(0.0f64, |acc, &d| acc.max((d as f64).abs()))
    }

    /// `clamp01(video + self)`.
    pub fn apply(&self, video: &VideoTensor) -> Result<VideoTensor> {
        ensure_shape(self.shape, video.shape)?;
        let data = video
            .data
            .iter()
            .zip(&self.data)
            .map(|(v, d)| (v + d).clamp(0.0, 1.0))
            .collect();
        Ok(VideoTensor {
            shape: video.shape,
            data,
        })
    }
}

/// Independent pixel-level L2 and L∞ caps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBudget {
    pub eps_l2: f64,
    pub eps_linf: f64,
}

impl NormBudget {
    pub fn new(eps_l2: f64, eps_linf: f64) -> Result<Self> {
        let budget = Self { eps_l2, eps_linf };
        budget.validate()?;
        Ok(budget)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.eps_l2) || !ok(self.eps_linf) {
            return Err(Error::Config(format!(
                "norm caps must be finite and positive (eps_l2={}, eps_linf={})",
                self.eps_l2, self.eps_linf
            )));
        }
        Ok(())
    }

    /// Whether measured norms fit this budget with the usual audit slack.
    pub fn admits(&self, pixel_l2: f64, linf: f64) -> bool {
        pixel_l2 <= self.eps_l2 + L2_SLACK && linf <= self.eps_linf + LINF_SLACK
    }
}

/// Absolute slack on the pixel-level L2 cap when auditing.
pub const L2_SLACK: f64 = 1e-6;
/// Absolute slack on the L∞ cap when auditing.
pub const LINF_SLACK: f64 = 1e-9;

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for v in values {
        sum += v * v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// Root-mean-square difference over all `X·H·W·3` elements.
pub fn pixel_l2(orig: &VideoTensor, adv: &VideoTensor) -> Result<f64> {
    orig.ensure_same_shape(adv)?;
    Ok(rms(orig
        .data
        .iter()
        .zip(&adv.data)
        .map(|(&o, &a)| a as f64 - o as f64)))
}

/// Maximum absolute elementwise difference.
pub fn linf(orig: &VideoTensor, adv: &VideoTensor) -> Result<f64> {
    orig.ensure_same_shape(adv)?;
    Ok(orig
        .data
        .iter()
        .zip(&adv.data)
        .fold(0.0f64, |acc, (&o, &a)| acc.max((a as f64 - o as f64).abs())))
}

/// Plain Euclidean norm of the difference over one frame.
pub fn frame_l2(orig: &VideoTensor, adv: &VideoTensor, frame: usize) -> Result<f64> {
    orig.ensure_same_shape(adv)?;
    if frame >= orig.frames() {
        return Err(Error::Dimension(format!("frame {frame} out of range")));
    }
    let sum: f64 = orig
        .frame(frame)
        .iter()
        .zip(adv.frame(frame))
        .map(|(&o, &a)| {
            let d = a as f64 - o as f64;
            d * d
        })
        .sum();
    Ok(sum.sqrt())
}

/// Clamp to the L∞ box, then rescale uniformly onto the L2 ball if still outside.
///
/// One alternating pass; both caps hold afterwards.
pub fn project(perturbation: &Perturbation, budget: &NormBudget) -> Perturbation {
    let mut out = perturbation.clone();
    project_in_place(&mut out.data, budget);
    out
}

pub(crate) fn project_in_place(data: &mut [f32], budget: &NormBudget) {
    let cap = f32_at_most(budget.eps_linf);
    for d in data.iter_mut() {
        *d = d.clamp(-cap, cap);
    }
    let l2 = rms(data.iter().map(|&d| d as f64));
    if l2 > budget.eps_l2 {
        let factor = budget.eps_l2 / l2;
        for d in data.iter_mut() {
            *d = (*d as f64 * factor) as f32;
        }
    }
}

/// Largest `f32` not above `x` (for non-negative `x`).
fn f32_at_most(x: f64) -> f32 {
    let v = x as f32;
    if v as f64 > x && v > 0.0 {
        f32::from_bits(v.to_bits() - 1)
    } else {
        v
    }
}

/// Elementwise clamp into `[0, 1]`.
pub fn clamp01(video: &VideoTensor) -> VideoTensor {
    VideoTensor {
        shape: video.shape,
        data: video.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
    }
}

/// `clamp01(orig + delta)` rounded to `f32`, nudged toward `orig` so that the
/// stored difference never exceeds `cap` in magnitude.
pub(crate) fn offset_within(orig: f32, delta: f64, cap: f64) -> f32 {
    let mut v = (orig as f64 + delta).clamp(0.0, 1.0) as f32;
    while (v as f64 - orig as f64).abs() > cap {
        v = step_toward(v, orig);
    }
    v
}

fn step_toward(v: f32, target: f32) -> f32 {
    if v == target {
        return v;
    }
    let bits = v.to_bits();
    // positive finite values only (video range)
    if v > target {
        if v == 0.0 {
            v
        } else {
            f32::from_bits(bits - 1)
        }
    } else {
        f32::from_bits(bits + 1)
    }
}

/// `⌈ratio·frames⌉` frame indices spread evenly over `0..frames`.
pub fn frame_subset(frames: usize, ratio: f64) -> Result<Vec<usize>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(format!(
            "perturbed-frame ratio must lie in (0, 1], got {ratio}"
        )));
    }
    if frames == 0 {
        return Ok(Vec::new());
    }
    let count = ((ratio * frames as f64) - 1e-9).ceil().clamp(1.0, frames as f64) as usize;
    Ok((0..count)
        .map(|j| ((2 * j + 1) * frames) / (2 * count))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn video(x: usize, h: usize, w: usize, v: f32) -> VideoTensor {
        VideoTensor::filled(x, h, w, v).unwrap()
    }

    #[test]
    fn pixel_l2_zero_perturbation() {
        let v = video(2, 3, 4, 0.4);
        assert_eq!(pixel_l2(&v, &v).unwrap(), 0.0);
        assert_eq!(linf(&v, &v).unwrap(), 0.0);
    }

    #[test]
    fn pixel_l2_uniform_shift_equals_shift() {
        let gamma = 5.0 / 255.0;
        let orig = video(2, 4, 4, 0.5);
        let adv = Perturbation::from_data(orig.shape(), vec![gamma as f32; orig.len()])
            .unwrap()
            .apply(&orig)
            .unwrap();
        assert!((pixel_l2(&orig, &adv).unwrap() - gamma).abs() < 1e-7);
        assert!((linf(&orig, &adv).unwrap() - gamma).abs() < 1e-7);
    }

    #[test]
    fn pixel_l2_single_spike() {
        let orig = video(1, 2, 2, 0.0);
        let mut data = vec![0.0f32; 12];
        data[5] = 0.12;
        let adv = VideoTensor::new(1, 2, 2, data).unwrap();
        let expected = 0.12 / 12f64.sqrt();
        assert!((pixel_l2(&orig, &adv).unwrap() - expected).abs() < 1e-6);
        assert!((expected - 0.034641).abs() < 1e-6);
    }

    #[test]
    fn linf_mixed_signs() {
        let shape = Shape::new(1, 1, 2);
        let p = Perturbation::from_data(shape, vec![0.01, -0.03, 0.0, 0.01, 0.01, -0.01]).unwrap();
        assert!((p.linf() - 0.03).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let a = video(1, 2, 2, 0.0);
        let b = video(1, 2, 3, 0.0);
        assert!(matches!(pixel_l2(&a, &b), Err(Error::Dimension(_))));
        assert!(matches!(linf(&a, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn project_interior_is_unchanged() {
        let budget = NormBudget::new(1.0 / 255.0, 3.0 / 255.0).unwrap();
        let p = Perturbation::from_data(Shape::new(1, 1, 2), vec![0.001, -0.002, 0.0, 0.003, 0.0, 0.0])
            .unwrap();
        assert_eq!(project(&p, &budget), p);
    }

    #[test]
    fn project_uniform_over_l2_rescales_by_half() {
        let budget = NormBudget::new(1.0 / 255.0, 3.0 / 255.0).unwrap();
        let shape = Shape::new(2, 3, 3);
        let p = Perturbation::from_data(shape, vec![2.0 / 255.0; shape.len()]).unwrap();
        let q = project(&p, &budget);
        for &d in q.data() {
            assert!((d as f64 - 1.0 / 255.0).abs() < 1e-8);
        }
    }

    #[test]
    fn project_clamps_spike() {
        let budget = NormBudget::new(1.0, 3.0 / 255.0).unwrap();
        let shape = Shape::new(1, 1, 1);
        let p = Perturbation::from_data(shape, vec![10.0 / 255.0, 0.0, 0.0]).unwrap();
        let q = project(&p, &budget);
        assert!((q.data()[0] as f64 - 3.0 / 255.0).abs() < 1e-9);
    }

    #[test]
    fn clamp01_cases() {
        let v = VideoTensor::new(1, 1, 1, vec![1.2, -0.1, 0.3]).unwrap();
        let c = clamp01(&v);
        assert_eq!(c.data(), &[1.0, 0.0, 0.3]);
        assert_eq!(clamp01(&c), c);
    }

    #[test]
    fn budget_rejects_nonpositive() {
        assert!(NormBudget::new(0.0, 1.0).is_err());
        assert!(NormBudget::new(1.0, -1.0).is_err());
        assert!(NormBudget::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn offset_never_exceeds_cap() {
        let gamma = 5.0 / 255.0;
        for i in 0..=1000 {
            let o = i as f32 / 1000.0;
            for sign in [-1.0, 1.0] {
                let v = offset_within(o, sign * gamma, gamma);
                assert!((v as f64 - o as f64).abs() <= gamma);
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn frame_subset_sizes() {
        assert_eq!(frame_subset(10, 0.1).unwrap().len(), 1);
        assert_eq!(frame_subset(8, 0.2).unwrap(), vec![2, 6]);
        assert_eq!(frame_subset(8, 1.0).unwrap(), (0..8).collect::<Vec<_>>());
        assert_eq!(frame_subset(8, 0.5).unwrap(), vec![1, 3, 5, 7]);
        assert!(frame_subset(8, 0.0).is_err());
        assert!(frame_subset(8, 1.5).is_err());
    }
}
