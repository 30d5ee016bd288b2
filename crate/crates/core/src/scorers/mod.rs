//! Quality scorers: the `f(·)` the attacks query.
//!
//! [`ScorerOracle`] is score-only (black-box); [`DifferentiableScorer`] also
//! yields `∂score/∂pixel` (white-box). Built-in toy scorers make the pipeline
//! runnable without external models; [`BridgeScorer`] talks to an
//! out-of-process host.

mod bridge;
mod constant;
mod conv;
mod gradcheck;
mod prng;
mod tv;

pub use bridge::{BridgeScorer, ScoreRequestHeader, ScoreResponse};
pub use constant::ConstScorer;
pub use conv::{ConvParams, ConvScorer};
pub use gradcheck::check_gradient;
pub use prng::XorShift64Star;
pub use tv::{total_variation, TvScorer};

use crate::error::Result;
use crate::video::VideoTensor;

/// Score-only access to a quality model.
///
/// Every call to [`score`](Self::score) increments [`query_count`](Self::query_count) by one.
pub trait ScorerOracle {
    fn score(&mut self, video: &VideoTensor) -> Result<f64>;

    fn query_count(&self) -> u64;
}

/// A scorer that also exposes the gradient of its output with respect to
/// every element of the input, in video layout.
pub trait DifferentiableScorer: ScorerOracle {
    /// Score and gradient in one pass. Counts as a single query.
    fn value_and_gradient(&mut self, video: &VideoTensor) -> Result<(f64, Vec<f64>)>;
}

impl<S: ScorerOracle + ?Sized> ScorerOracle for &mut S {
    fn score(&mut self, video: &VideoTensor) -> Result<f64> {
        (**self).score(video)
    }

    fn query_count(&self) -> u64 {
        (**self).query_count()
    }
}

impl<S: DifferentiableScorer + ?Sized> DifferentiableScorer for &mut S {
    fn value_and_gradient(&mut self, video: &VideoTensor) -> Result<(f64, Vec<f64>)> {
        (**self).value_and_gradient(video)
    }
}

#[inline]
pub(crate) fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
