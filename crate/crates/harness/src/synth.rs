//! Synthetic dataset: a shared moving scene viewed through per-video
//! windows, with Gaussian noise that grows linearly across the batch.
//! MOS is the clean score of a chosen scorer.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use vqadv::VideoTensor;

use crate::config::ScorerChoice;
use crate::error::{HarnessError, Result};
use crate::manifest::{DatasetManifest, ManifestEntry};

const WAVES: usize = 8;
const CONTRAST: f64 = 0.09;
const MIN_FREQUENCY: f64 = 0.15;
const MAX_FREQUENCY: f64 = 0.6;
const MAX_SPEED: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub count: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    /// Noise standard deviation of the last video; video `i` gets
    /// `sigma_max · i / (count − 1)`.
    pub sigma_max: f64,
    /// Half-width of the per-video, per-channel brightness offset.
    pub brightness_spread: f64,
    /// Scorer whose clean output becomes the MOS.
    pub scorer: ScorerChoice,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            count: 20,
            frames: 8,
            height: 112,
            width: 112,
            seed: 0,
            sigma_max: 0.055,
            brightness_spread: 0.0,
            scorer: ScorerChoice::default(),
        }
    }
}

struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    color: [f64; 3],
}

fn scene(rng: &mut ChaCha8Rng) -> Vec<Wave> {
    (0..WAVES)
        .map(|_| {
            let freq = rng.gen_range(MIN_FREQUENCY..MAX_FREQUENCY);
            let angle = rng.gen_range(0.0..std::f64::consts::PI);
            Wave {
                kx: freq * angle.cos(),
                ky: freq * angle.sin(),
                phase: rng.gen_range(0.0..std::f64::consts::TAU),
                color: [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ],
            }
        })
        .collect()
}

/// Noise level of video `index` in a batch of `count`.
pub fn noise_level(cfg: &GenConfig, index: usize) -> f64 {
    if cfg.count <= 1 {
        0.0
    } else {
        cfg.sigma_max * index as f64 / (cfg.count - 1) as f64
    }
}

/// One synthetic video. Deterministic in `(cfg.seed, index)`.
pub fn synth_video(cfg: &GenConfig, index: usize) -> Result<VideoTensor> {
    let waves = scene(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let (ox, oy) = (rng.gen_range(0.0..1000.0), rng.gen_range(0.0..1000.0));
    let (vx, vy) = (rng.gen_range(-MAX_SPEED..MAX_SPEED), rng.gen_range(-MAX_SPEED..MAX_SPEED));
    let offsets: Vec<f64> = (0..3)
        .map(|_| {
            if cfg.brightness_spread > 0.0 {
                rng.gen_range(-cfg.brightness_spread..cfg.brightness_spread)
            } else {
                0.0
            }
        })
        .collect();
    let sigma = noise_level(cfg, index);
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| HarnessError::Config(format!("bad noise level {sigma}: {e}")))?;

    let plane = cfg.height * cfg.width;
    let mut data = Vec::with_capacity(cfg.frames * plane * 3);
    let mut clean = vec![0.0f64; plane * 3];
    for f in 0..cfg.frames {
        for r in 0..cfg.height {
            for c in 0..cfg.width {
                let x = c as f64 + ox + vx * f as f64;
                let y = r as f64 + oy + vy * f as f64;
                for ch in 0..3 {
                    clean[(r * cfg.width + c) * 3 + ch] =
                        waves.iter().map(|w| w.color[ch] * (w.kx * x + w.ky * y + w.phase).sin()).sum();
                }
            }
        }
        // Every frame channel gets the same mean and contrast, so windows
        // differ in texture only.
        for (ch, offset) in offsets.iter().enumerate() {
            let values = clean.iter().skip(ch).step_by(3);
            let mean = values.clone().sum::<f64>() / plane as f64;
            let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / plane as f64;
            let scale = CONTRAST / var.sqrt().max(1e-12);
            for v in clean.iter_mut().skip(ch).step_by(3) {
                *v = 0.5 + offset + (*v - mean) * scale;
            }
        }
        for &v in &clean {
            let v = if sigma > 0.0 { v + noise.sample(&mut rng) } else { v };
            data.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    Ok(VideoTensor::new(cfg.frames, cfg.height, cfg.width, data)?)
}

/// Write `synth_NNN.rvid` files and `manifest.json` into `out_dir`.
pub fn gen_synthetic(cfg: &GenConfig, out_dir: &Path) -> Result<DatasetManifest> {
    if cfg.count == 0 || cfg.frames == 0 || cfg.height == 0 || cfg.width == 0 {
        return Err(HarnessError::Config("count, frames, height and width must be positive".into()));
    }
    if !(cfg.sigma_max >= 0.0 && cfg.sigma_max.is_finite()) {
        return Err(HarnessError::Config(format!("sigma_max must be >= 0, got {}", cfg.sigma_max)));
    }
    fs::create_dir_all(out_dir).map_err(HarnessError::io(out_dir))?;
    let mut scorer = cfg.scorer.build()?;
    let mut entries = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let video = synth_video(cfg, i)?;
        let mos = scorer.oracle().score(&video)?;
        let name = format!("synth_{i:03}.rvid");
        vqadv::io::write_rvid(&video, out_dir.join(&name))?;
        entries.push(ManifestEntry {
            id: format!("synth_{i:03}"),
            video_path: name.into(),
            mos: Some(mos),
        });
    }
    let manifest = DatasetManifest { entries };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}
