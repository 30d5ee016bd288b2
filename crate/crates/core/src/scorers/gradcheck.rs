use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DifferentiableScorer;
use crate::error::{Error, Result};
use crate::video::VideoTensor;

/// Largest relative disagreement between the analytic gradient and central
/// finite differences on `n_coords` uniformly sampled coordinates.
///
/// For coordinate `i` the error is `|g_i − fd_i| / max(|g_i|, |fd_i|, τ)`
/// where `τ = 1e-3 · max_j |g_j|` over the sampled coordinates; `τ` keeps
/// coordinates whose true derivative is zero from dividing rounding noise by
/// zero. The finite-difference denominator is the step actually realised in
/// `f32`, not the nominal `2·step`.
pub fn check_gradient<S>(
    scorer: &mut S,
    video: &VideoTensor,
    n_coords: usize,
    step: f64,
    seed: u64,
) -> Result<f64>
where
    S: DifferentiableScorer + ?Sized,
{
    if n_coords == 0 {
        return Err(Error::Config("gradient check needs at least one coordinate".into()));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!("invalid finite-difference step {step}")));
    }
    let (_, grad) = scorer.value_and_gradient(video)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<usize> = (0..n_coords).map(|_| rng.gen_range(0..video.len())).collect();

    let mut pairs = Vec::with_capacity(n_coords);
    let mut probe = video.clone();
    for &i in &coords {
        let x = video.data()[i];
        let plus = (x as f64 + step) as f32;
        let minus = (x as f64 - step) as f32;
        probe.data_mut()[i] = plus;
        let f_plus = scorer.score(&probe)?;
        probe.data_mut()[i] = minus;
        let f_minus = scorer.score(&probe)?;
        probe.data_mut()[i] = x;
        let fd = (f_plus - f_minus) / (plus as f64 - minus as f64);
        pairs.push((grad[i], fd));
    }

    let scale = pairs.iter().fold(0.0f64, |m, (g, _)| m.max(g.abs()));
    let tau = 1e-3 * scale;
    Ok(pairs.iter().fold(0.0f64, |worst, &(g, fd)| {
        let denom = g.abs().max(fd.abs()).max(tau);
        let err = if denom == 0.0 { 0.0 } else { (g - fd).abs() / denom };
        worst.max(err)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorers::{ConstScorer, ScorerOracle};

    #[test]
    fn const_scorer_has_zero_error() {
        let v = VideoTensor::filled(1, 4, 4, 0.5).unwrap();
        let mut s = ConstScorer::new(0.3);
        assert_eq!(check_gradient(&mut s, &v, 20, 1e-3, 0).unwrap(), 0.0);
        assert_eq!(s.query_count(), 41);
    }

    #[test]
    fn rejects_zero_coordinates() {
        let v = VideoTensor::filled(1, 4, 4, 0.5).unwrap();
        assert!(check_gradient(&mut ConstScorer::new(0.3), &v, 0, 1e-3, 0).is_err());
    }
}
