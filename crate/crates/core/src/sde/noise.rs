use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::seed::replica_rng;

/// Stream tag under which Brownian increments are derived.
pub const BROWNIAN_TAG: &str = "brownian";

/// Seeded source of Brownian increments `√dt · N(0, I_d)`.
///
/// The `n`-th call to [`BrownianSource::fill`] returns the increment of step
/// `n`, so `(master_seed, replica, step)` determines every value.
#[derive(Debug, Clone)]
pub struct BrownianSource {
    rng: ChaCha8Rng,
    sqrt_dt: f64,
    dim: usize,
    steps_drawn: u64,
}

impl BrownianSource {
    pub fn new(master_seed: u64, replica: u64, dim: usize, dt: f64) -> Self {
        Self {
            rng: replica_rng(master_seed, BROWNIAN_TAG, replica),
            sqrt_dt: dt.sqrt(),
            dim,
            steps_drawn: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps_drawn(&self) -> u64 {
        self.steps_drawn
    }

    #[inline]
    pub fn fill(&mut self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        for v in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *v = self.sqrt_dt * z;
        }
        self.steps_drawn += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_keys_identical_increments() {
        let mut a = BrownianSource::new(9, 3, 2, 0.01);
        let mut b = BrownianSource::new(9, 3, 2, 0.01);
        let mut c = BrownianSource::new(9, 4, 2, 0.01);
        let (mut xa, mut xb, mut xc) = ([0.0; 2], [0.0; 2], [0.0; 2]);
        let mut differs = false;
        for _ in 0..1000 {
            a.fill(&mut xa);
            b.fill(&mut xb);
            c.fill(&mut xc);
            assert_eq!(xa, xb);
            differs |= xa != xc;
        }
        assert!(differs);
        assert_eq!(a.steps_drawn(), 1000);
    }

    #[test]
    fn increments_have_variance_dt() {
        let dt = 0.04;
        let mut src = BrownianSource::new(1, 0, 1, dt);
        let n = 200_000;
        let mut x = [0.0];
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            src.fill(&mut x);
            s += x[0];
            s2 += x[0] * x[0];
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 5.0 * (dt / n as f64).sqrt());
        assert!((var / dt - 1.0).abs() < 0.02);
    }
}
