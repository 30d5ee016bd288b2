use super::{DifferentiableScorer, ScorerOracle};
use crate::error::Result;
use crate::video::VideoTensor;

/// Always returns the same score. Its gradient is identically zero.
#[derive(Debug, Clone)]
pub struct ConstScorer {
    value: f64,
    queries: u64,
}

impl ConstScorer {
    pub fn new(value: f64) -> Self {
        Self { value, queries: 0 }
    }
}

impl ScorerOracle for ConstScorer {
    fn score(&mut self, _video: &VideoTensor) -> Result<f64> {
        self.queries += 1;
        Ok(self.value)
    }

    fn query_count(&self) -> u64 {
        self.queries
    }
}

impl DifferentiableScorer for ConstScorer {
    fn value_and_gradient(&mut self, video: &VideoTensor) -> Result<(f64, Vec<f64>)> {
        self.queries += 1;
        Ok((self.value, vec![0.0; video.len()]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_value_and_query_count() {
        let v = VideoTensor::filled(1, 2, 2, 0.3).unwrap();
        let mut s = ConstScorer::new(0.25);
        for _ in 0..3 {
            assert_eq!(s.score(&v).unwrap(), 0.25);
        }
        assert_eq!(s.query_count(), 3);
        let (_, g) = s.value_and_gradient(&v).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
        assert_eq!(s.query_count(), 4);
    }
}
