//! Weighted empirical measures and the distances used to watch an occupation
//! measure settle.

mod stabilisation;
mod tail;

pub(crate) use stabilisation::quantile;
pub use stabilisation::{
    estimate_stabilisation_time, stabilisation_curve, StabilisationCurve, StabilisationEstimate, MIN_REPLICAS,
};
pub use tail::{tail_profile, TailProfile};

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seed::replica_rng;

/// A finite weighted sample `Σ wᵢ δ_{xᵢ} / Σ wᵢ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    total: f64,
}

impl OccupationMeasure {
    /// `points` is flat, `weights.len() × dim`. Weights must be positive.
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Usage("measure dimension must be at least 1".into()));
        }
        if weights.is_empty() {
            return Err(Error::Usage("measure has no samples".into()));
        }
        if points.len() != weights.len() * dim {
            return Err(Error::Usage(format!(
                "{} coordinates do not fit {} samples in dimension {dim}",
                points.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Usage("weights must be finite and positive".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("measure support".into()));
        }
        let total = weights.iter().sum();
        Ok(Self {
            dim,
            points,
            weights,
            total,
        })
    }

    /// Equal weights on the given points.
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        let n = points.len() / dim.max(1);
        Self::new(dim, points, vec![1.0; n])
    }

    /// Equal weights on 1-D atoms.
    pub fn from_atoms(atoms: &[f64]) -> Result<Self> {
        Self::uniform(1, atoms.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Weighted mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (i, w) in self.weights.iter().enumerate() {
            for (mj, pj) in m.iter_mut().zip(self.point(i)) {
                *mj += w * pj;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.total);
        m
    }

    /// The image under `x ↦ c·x`.
    pub fn dilate(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            points: self.points.iter().map(|p| c * p).collect(),
            weights: self.weights.clone(),
            total: self.total,
        }
    }

    /// The image under `x ↦ x + shift`.
    pub fn translate(&self, shift: &[f64]) -> Self {
        let points = self
            .points
            .chunks(self.dim)
            .flat_map(|p| p.iter().zip(shift).map(|(a, b)| a + b))
            .collect();
        Self {
            dim: self.dim,
            points,
            weights: self.weights.clone(),
            total: self.total,
        }
    }

    fn project(&self, u: &[f64]) -> Self {
        let points = self.points.chunks(self.dim).map(|p| p.iter().zip(u).map(|(a, b)| a * b).sum()).collect();
        Self {
            dim: 1,
            points,
            weights: self.weights.clone(),
            total: self.total,
        }
    }
}

pub(crate) fn weighted_central_moment(
    dim: usize,
    points: &[f64],
    weights: &[f64],
    total: f64,
    center: &[f64],
    order: u32,
) -> f64 {
    let half = (order / 2) as i32;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        let p = &points[i * dim..(i + 1) * dim];
        let r2: f64 = p.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
        acc += w * r2.powi(half);
    }
    acc / total
}

/// `(1/Σw) Σ wᵢ |xᵢ − center|^order` for an even `order ≥ 2`.
pub fn central_moment(mu: &OccupationMeasure, center: &[f64], order: u32) -> Result<f64> {
    if order < 2 || order % 2 != 0 {
        return Err(Error::Usage(format!("moment order must be even and >= 2, got {order}")));
    }
    if center.len() != mu.dim {
        return Err(Error::Usage(format!("center has dimension {}, measure has {}", center.len(), mu.dim)));
    }
    Ok(weighted_central_moment(mu.dim, &mu.points, &mu.weights, mu.total, center, order))
}

/// `W₂ₖ(μ, δ_m)`: the only coupling with a Dirac mass is the product one, so
/// this is the `2k`-th root of the central moment of order `2k`.
pub fn w2k_to_dirac(mu: &OccupationMeasure, m: &[f64], k: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::Usage("k must be >= 1".into()));
    }
    Ok(central_moment(mu, m, 2 * k)?.powf(1.0 / (2 * k) as f64))
}

fn sorted_atoms(mu: &OccupationMeasure) -> Vec<(f64, f64)> {
    let mut a: Vec<(f64, f64)> = mu.points.iter().zip(&mu.weights).map(|(x, w)| (*x, w / mu.total)).collect();
    a.sort_by(|p, q| p.0.total_cmp(&q.0));
    a
}

/// `∫ |F⁻¹(u) − G⁻¹(u)|^p du` through the monotone coupling.
fn quantile_cost(a: &[(f64, f64)], b: &[(f64, f64)], p: i32) -> f64 {
    const EPS: f64 = 1e-14;
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut cost = 0.0;
    while i < a.len() && j < b.len() {
        let m = ra.min(rb);
        cost += m * (a[i].0 - b[j].0).abs().powi(p);
        ra -= m;
        rb -= m;
        if ra <= EPS {
            i += 1;
            if i < a.len() {
                ra = a[i].1;
            }
        }
        if rb <= EPS {
            j += 1;
            if j < b.len() {
                rb = b[j].1;
            }
        }
    }
    cost
}

/// `W₂ₖ(μ, ν)` between two 1-D measures via the quantile coupling, which is
/// optimal for every convex cost on the line.
pub fn w2k_empirical_1d(mu: &OccupationMeasure, nu: &OccupationMeasure, k: u32) -> Result<f64> {
    if mu.dim != 1 || nu.dim != 1 {
        return Err(Error::Usage(format!(
            "quantile coupling needs 1-D measures, got dimensions {} and {}",
            mu.dim, nu.dim
        )));
    }
    if k == 0 {
        return Err(Error::Usage("k must be >= 1".into()));
    }
    let p = 2 * k as i32;
    Ok(quantile_cost(&sorted_atoms(mu), &sorted_atoms(nu), p).powf(1.0 / p as f64))
}

/// Sliced `W₂`: root mean over `projections` random unit directions of the
/// squared 1-D `W₂` between the projected measures. Directions are drawn from
/// a stream keyed by `seed`.
pub fn sliced_w2(mu: &OccupationMeasure, nu: &OccupationMeasure, projections: usize, seed: u64) -> Result<f64> {
    if projections < 1 {
        return Err(Error::Usage("need at least one projection".into()));
    }
    if mu.dim != nu.dim {
        return Err(Error::Usage(format!("dimension mismatch: {} vs {}", mu.dim, nu.dim)));
    }
    if mu.dim < 2 {
        return Err(Error::Usage("sliced distance is for dimension >= 2; use w2k_empirical_1d".into()));
    }
    let mut rng = replica_rng(seed, "sliced", 0);
    let mut acc = 0.0;
    let mut u = vec![0.0; mu.dim];
    for _ in 0..projections {
        loop {
            for c in u.iter_mut() {
                *c = StandardNormal.sample(&mut rng);
            }
            let n = u.iter().map(|c| c * c).sum::<f64>().sqrt();
            if n > 1e-12 {
                u.iter_mut().for_each(|c| *c /= n);
                break;
            }
        }
        let a = sorted_atoms(&mu.project(&u));
        let b = sorted_atoms(&nu.project(&u));
        acc += quantile_cost(&a, &b, 2);
    }
    Ok((acc / projections as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn moments() {
        let mu = OccupationMeasure::from_atoms(&[2.0]).unwrap();
        assert_eq!(central_moment(&mu, &[2.0], 2).unwrap(), 0.0);
        let mu = OccupationMeasure::from_atoms(&[-1.0, 1.0]).unwrap();
        assert_eq!(central_moment(&mu, &[0.0], 2).unwrap(), 1.0);
        assert!(central_moment(&mu, &[0.0], 3).is_err());
        assert!(central_moment(&mu, &[0.0], 0).is_err());
    }

    #[test]
    fn weighted_fourth_moment() {
        let pts = [0.3, -1.2, 2.5, 0.0, -0.7, 1.1, 0.9, 0.4, -2.0, 0.6];
        let wts = [0.1, 0.4, 0.2, 0.9, 0.25];
        let mu = OccupationMeasure::new(2, pts.to_vec(), wts.to_vec()).unwrap();
        let c = [0.2, -0.1];
        let mut num = 0.0;
        for i in 0..5 {
            let dx = pts[2 * i] - c[0];
            let dy = pts[2 * i + 1] - c[1];
            num += wts[i] * (dx * dx + dy * dy) * (dx * dx + dy * dy);
        }
        let expect = num / wts.iter().sum::<f64>();
        assert!((central_moment(&mu, &c, 4).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn dirac_distance() {
        let mu = OccupationMeasure::from_atoms(&[0.5]).unwrap();
        assert_eq!(w2k_to_dirac(&mu, &[0.5], 1).unwrap(), 0.0);
        let mu = OccupationMeasure::from_atoms(&[-0.5, 1.5]).unwrap();
        assert_eq!(w2k_to_dirac(&mu, &[0.5], 1).unwrap(), 1.0);
    }

    #[test]
    fn one_d_basics() {
        let a = OccupationMeasure::from_atoms(&[0.0]).unwrap();
        let b = OccupationMeasure::from_atoms(&[3.0]).unwrap();
        assert_eq!(w2k_empirical_1d(&a, &b, 1).unwrap(), 3.0);
        let c = OccupationMeasure::from_atoms(&[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(w2k_empirical_1d(&c, &c, 2).unwrap(), 0.0);
        let planar = OccupationMeasure::uniform(2, vec![0.0, 1.0]).unwrap();
        assert!(w2k_empirical_1d(&planar, &planar, 1).is_err());
    }

    #[test]
    fn unequal_atom_counts() {
        // {0, 1} vs {0.5}: every unit of mass moves 0.5
        let a = OccupationMeasure::from_atoms(&[0.0, 1.0]).unwrap();
        let b = OccupationMeasure::from_atoms(&[0.5]).unwrap();
        assert!((w2k_empirical_1d(&a, &b, 1).unwrap() - 0.5).abs() < 1e-15);
        // mass 1/3 at 0 and 2/3 at 3 against uniform {0, 3, 3}
        let c = OccupationMeasure::new(1, vec![3.0, 0.0], vec![2.0, 1.0]).unwrap();
        let d = OccupationMeasure::from_atoms(&[3.0, 0.0, 3.0]).unwrap();
        assert!(w2k_empirical_1d(&c, &d, 1).unwrap() < 1e-7);
    }

    #[test]
    fn sliced_examples() {
        let mu = OccupationMeasure::uniform(2, vec![0.0, 0.0, 1.0, 0.5, -0.3, 2.0]).unwrap();
        assert_eq!(sliced_w2(&mu, &mu, 16, 1).unwrap(), 0.0);
        let v = [0.6, -0.8];
        let nu = mu.translate(&v);
        let s = sliced_w2(&mu, &nu, 64, 3).unwrap();
        assert!(s <= 1.0 + 1e-12 && s > 0.0);
        assert_eq!(s, sliced_w2(&mu, &nu, 64, 3).unwrap());
        assert!(sliced_w2(&mu, &nu, 0, 3).is_err());
        let line = OccupationMeasure::from_atoms(&[1.0]).unwrap();
        assert!(sliced_w2(&line, &line, 4, 3).is_err());
    }

    #[test]
    fn sliced_estimate_settles() {
        let mu = OccupationMeasure::uniform(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 2.0]).unwrap();
        let nu = OccupationMeasure::uniform(2, vec![0.5, 0.5, -1.0, 1.0, 2.0, 2.0]).unwrap();
        let est: Vec<f64> = [64, 256, 1024, 4096].iter().map(|p| sliced_w2(&mu, &nu, *p, 9).unwrap()).collect();
        let steps: Vec<f64> = est.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        assert!(steps[2] < steps[0], "{est:?}");
        assert!(steps[2] < 0.02 * est[3]);
    }

    fn atoms(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0f64..5.0, n)
    }

    proptest! {
        #[test]
        fn dirac_identity(pts in atoms(12), wts in prop::collection::vec(0.01f64..3.0, 6), k in 1u32..4) {
            let mu = OccupationMeasure::new(2, pts, wts).unwrap();
            let m = [0.3, -0.4];
            let d = w2k_to_dirac(&mu, &m, k).unwrap();
            let mom = central_moment(&mu, &m, 2 * k).unwrap();
            prop_assert!((d.powi(2 * k as i32) - mom).abs() <= 1e-12 * mom.max(1.0));
        }

        #[test]
        fn triangle_inequality(a in atoms(5), b in atoms(7), c in atoms(4), k in 1u32..3) {
            let (a, b, c) = (
                OccupationMeasure::from_atoms(&a).unwrap(),
                OccupationMeasure::from_atoms(&b).unwrap(),
                OccupationMeasure::from_atoms(&c).unwrap(),
            );
            let ab = w2k_empirical_1d(&a, &b, k).unwrap();
            let bc = w2k_empirical_1d(&b, &c, k).unwrap();
            let ac = w2k_empirical_1d(&a, &c, k).unwrap();
            prop_assert!(ac <= ab + bc + 1e-10);
        }

        #[test]
        fn dilation_scaling(a in atoms(6), b in atoms(6), c in -4.0f64..4.0, k in 1u32..3) {
            let (a, b) = (OccupationMeasure::from_atoms(&a).unwrap(), OccupationMeasure::from_atoms(&b).unwrap());
            let base = w2k_empirical_1d(&a, &b, k).unwrap();
            let scaled = w2k_empirical_1d(&a.dilate(c), &b.dilate(c), k).unwrap();
            prop_assert!((scaled - c.abs() * base).abs() <= 1e-12 * (1.0 + c.abs() * base));
        }
    }
}
