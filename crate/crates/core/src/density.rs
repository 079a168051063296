//! The self-consistent invariant density in one dimension.
//!
//! `Π_σ(μ)` is the probability density proportional to
//! `exp(−(2/σ²)(V + W∗μ))`. Its fixed point is found by damped Picard
//! iteration on a uniform grid, with trapezoidal quadrature everywhere.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::PotentialSpec;

/// Uniform mesh `lo = x₀ < … < x_{n−1} = hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

/// Largest grid accepted by the O(n²) convolution.
pub const MAX_GRID_POINTS: usize = 4096;

impl GridSpec {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        let g = Self { lo, hi, n };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::Config(format!("grid needs lo < hi, got [{}, {}]", self.lo, self.hi)));
        }
        if !(3..=MAX_GRID_POINTS).contains(&self.n) {
            return Err(Error::Config(format!("grid size must be in 3..={MAX_GRID_POINTS}, got {}", self.n)));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    fn trapezoid(&self, f: &[f64]) -> f64 {
        let inner: f64 = f[1..self.n - 1].iter().sum();
        self.step() * (inner + 0.5 * (f[0] + f[self.n - 1]))
    }
}

/// A probability density sampled on a [`GridSpec`], normalized by the trapezoid rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridDensity {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl GridDensity {
    /// Normalizes non-negative samples.
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.n {
            return Err(Error::Usage(format!("{} values for a {}-point grid", values.len(), grid.n)));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Usage("density values must be finite and non-negative".into()));
        }
        let z = grid.trapezoid(&values);
        if !(z > 0.0) {
            return Err(Error::Usage("density has zero mass".into()));
        }
        Ok(Self {
            grid,
            values: values.into_iter().map(|v| v / z).collect(),
        })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..grid.n).map(|i| f(grid.x(i))).collect();
        Self::new(grid, values)
    }

    pub fn uniform(grid: GridSpec) -> Result<Self> {
        Self::new(grid, vec![1.0; grid.n])
    }

    /// Grid restriction of the normal density `N(mean, sd²)`.
    pub fn gaussian(grid: GridSpec, mean: f64, sd: f64) -> Result<Self> {
        Self::from_fn(grid, |x| (-(x - mean) * (x - mean) / (2.0 * sd * sd)).exp())
    }

    pub fn integral(&self) -> f64 {
        self.grid.trapezoid(&self.values)
    }

    pub fn mean(&self) -> f64 {
        let f: Vec<f64> = self.values.iter().enumerate().map(|(i, v)| self.grid.x(i) * v).collect();
        self.grid.trapezoid(&f)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.central_second_moment(m)
    }

    fn central_second_moment(&self, c: f64) -> f64 {
        let f: Vec<f64> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| (self.grid.x(i) - c).powi(2) * v)
            .collect();
        self.grid.trapezoid(&f)
    }

    /// `W₂(ρ, δ_m) = (∫ (x − m)² ρ)^{1/2}`.
    pub fn w2_to_point(&self, m: f64) -> f64 {
        self.central_second_moment(m).sqrt()
    }

    /// Cumulative mass at the nodes, treating the density as linear in each cell.
    fn node_cdf(&self) -> Vec<f64> {
        let h = self.grid.step();
        let mut c = vec![0.0; self.grid.n];
        for i in 1..self.grid.n {
            c[i] = c[i - 1] + 0.5 * h * (self.values[i - 1] + self.values[i]);
        }
        c
    }

    /// Quantile function of the piecewise-linear density, vectorized over
    /// increasing levels `u`.
    fn quantiles(&self, us: &[f64]) -> Vec<f64> {
        let cdf = self.node_cdf();
        let h = self.grid.step();
        let mut out = Vec::with_capacity(us.len());
        let mut i = 0;
        for &u in us {
            while i + 2 < self.grid.n && cdf[i + 1] < u {
                i += 1;
            }
            let (a, b) = (self.values[i], self.values[i + 1]);
            let r = (u - cdf[i]).max(0.0);
            // solve a s + (b − a) s² / (2h) = r on [0, h]
            let q = (b - a) / (2.0 * h);
            let s = if q.abs() < 1e-300 || (q * r).abs() < 1e-14 * a * a {
                if a > 0.0 {
                    r / a
                } else {
                    0.0
                }
            } else {
                2.0 * r / (a + (a * a + 4.0 * q * r).max(0.0).sqrt())
            };
            out.push(self.grid.x(i) + s.clamp(0.0, h));
        }
        out
    }
}

/// Quantile levels used by [`density_distance`].
pub const QUANTILE_MESH: usize = 10_000;

/// `(L¹, W₂)` distance between two densities on the same grid.
pub fn density_distance(d1: &GridDensity, d2: &GridDensity) -> Result<(f64, f64)> {
    if d1.grid != d2.grid {
        return Err(Error::Usage(format!("grid mismatch: {:?} vs {:?}", d1.grid, d2.grid)));
    }
    let l1 = l1_distance(d1, d2);
    let us: Vec<f64> = (0..QUANTILE_MESH).map(|j| (j as f64 + 0.5) / QUANTILE_MESH as f64).collect();
    let q1 = d1.quantiles(&us);
    let q2 = d2.quantiles(&us);
    let w2 = (q1.iter().zip(&q2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / QUANTILE_MESH as f64).sqrt();
    Ok((l1, w2))
}

fn check_1d(v: &PotentialSpec, w: &PotentialSpec) -> Result<()> {
    w.ensure_interaction()?;
    if v.dim() != 1 || w.dim() != 1 {
        return Err(Error::Config("the density solver is one-dimensional".into()));
    }
    Ok(())
}

/// One application of `Π_σ`.
pub fn apply_pi(density: &GridDensity, v: &PotentialSpec, w: &PotentialSpec, sigma: f64) -> Result<GridDensity> {
    check_1d(v, w)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
    }
    let g = density.grid;
    let n = g.n;
    let h = g.step();
    let conv: Vec<f64> = if w.is_zero() {
        vec![0.0; n]
    } else {
        // W(x_i − x_j) depends on i − j only
        let table: Vec<f64> = (0..2 * n - 1).map(|d| w.value(&[(d as f64 - (n - 1) as f64) * h])).collect();
        let weighted: Vec<f64> = (0..n)
            .map(|j| density.values[j] * if j == 0 || j + 1 == n { 0.5 * h } else { h })
            .collect();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let base = i + n - 1;
                weighted.iter().enumerate().map(|(j, wj)| wj * table[base - j]).sum()
            })
            .collect()
    };
    let scale = 2.0 / (sigma * sigma);
    let expo: Vec<f64> = (0..n).map(|i| -scale * (v.value(&[g.x(i)]) + conv[i])).collect();
    let (imax, emax) = expo
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, e)| if *e > acc.1 { (i, *e) } else { acc });
    if !emax.is_finite() {
        return Err(Error::GridCoverage("Gibbs exponent is not finite on the grid".into()));
    }
    if imax == 0 || imax == n - 1 {
        return Err(Error::GridCoverage(format!(
            "Gibbs weight peaks at the grid edge x = {}; the grid misses the bulk of the measure",
            g.x(imax)
        )));
    }
    let values: Vec<f64> = expo.iter().map(|e| (e - emax).exp()).collect();
    GridDensity::new(g, values).map_err(|e| Error::GridCoverage(e.to_string()))
}

/// Settings of [`solve_fixed_point`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    pub sigma: f64,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    pub grid: GridSpec,
}

fn default_damping() -> f64 {
    0.5
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    1000
}

impl FixedPointConfig {
    pub fn new(sigma: f64, grid: GridSpec) -> Self {
        Self {
            sigma,
            damping: default_damping(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            grid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointDiagnostics {
    pub iterations: usize,
    /// L¹ residual `‖μ − Π_σ(μ)‖` before each update.
    pub residuals: Vec<f64>,
    /// Set when the residual increased somewhere after the fifth iteration.
    pub damping_warning: bool,
    pub sigma: f64,
    pub grid: GridSpec,
}

/// Damped Picard iteration `μ ← (1 − λ) μ + λ Π_σ(μ)` from the uniform density.
///
/// The grid must cover `m ± 8σ/√(2ρ)`, `m` and `ρ` being the minimizer and
/// convexity bound of `V`.
pub fn solve_fixed_point(
    v: &PotentialSpec,
    w: &PotentialSpec,
    config: &FixedPointConfig,
) -> Result<(GridDensity, FixedPointDiagnostics)> {
    check_1d(v, w)?;
    config.validate()?;
    let m = v.minimizer()[0];
    let rho = v.convexity_lower_bound;
    if rho > 0.0 {
        let half = 8.0 * config.sigma / (2.0 * rho).sqrt();
        if config.grid.lo > m - half || config.grid.hi < m + half {
            return Err(Error::GridCoverage(format!(
                "grid [{}, {}] does not cover [{}, {}]",
                config.grid.lo,
                config.grid.hi,
                m - half,
                m + half
            )));
        }
    }
    let lambda = config.damping;
    let mut mu = GridDensity::uniform(config.grid)?;
    let mut residuals = Vec::new();
    for it in 0..config.max_iter {
        let p = apply_pi(&mu, v, w, config.sigma)?;
        let l1 = l1_distance(&mu, &p);
        residuals.push(l1);
        if l1 <= config.tol {
            let damping_warning = residuals.windows(2).skip(5).any(|r| r[1] > r[0]);
            return Ok((
                mu,
                FixedPointDiagnostics {
                    iterations: it,
                    residuals,
                    damping_warning,
                    sigma: config.sigma,
                    grid: config.grid,
                },
            ));
        }
        let values = mu.values.iter().zip(&p.values).map(|(a, b)| (1.0 - lambda) * a + lambda * b).collect();
        mu = GridDensity::new(config.grid, values)?;
    }
    Err(Error::NonConvergence {
        iterations: config.max_iter,
        residual: *residuals.last().unwrap(),
    })
}

fn l1_distance(a: &GridDensity, b: &GridDensity) -> f64 {
    let diff: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).collect();
    a.grid.trapezoid(&diff)
}

/// L¹ distance between `μ` and `Π_σ(μ)`.
pub fn fixed_point_residual(mu: &GridDensity, v: &PotentialSpec, w: &PotentialSpec, sigma: f64) -> Result<f64> {
    Ok(l1_distance(mu, &apply_pi(mu, v, w, sigma)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new(-6.0, 6.0, 2001).unwrap()
    }

    fn quad(c: f64) -> PotentialSpec {
        PotentialSpec::quadratic(vec![0.0], c).unwrap()
    }

    #[test]
    fn gibbs_without_interaction() {
        let g = grid();
        let out = apply_pi(&GridDensity::uniform(g).unwrap(), &quad(2.0), &PotentialSpec::zero(1).unwrap(), 0.8).unwrap();
        assert!((out.integral() - 1.0).abs() < 1e-10);
        assert!((out.variance() - 0.64 / 4.0).abs() < 1e-6);
        assert!(out.values[1..g.n - 1].iter().all(|v| *v > 0.0));
    }

    #[test]
    fn spike_input_gives_effective_potential() {
        let g = grid();
        let h = g.step();
        let m = g.x(1100);
        let spike = GridDensity::from_fn(g, |x| if (x - m).abs() < 0.5 * h { 1.0 } else { 0.0 }).unwrap();
        let v = quad(1.0);
        let w = quad(1.0);
        let out = apply_pi(&spike, &v, &w, 1.0).unwrap();
        let exact = GridDensity::from_fn(g, |x| (-2.0 * (0.5 * x * x + 0.5 * (x - m).powi(2))).exp()).unwrap();
        let (l1, _) = density_distance(&out, &exact).unwrap();
        assert!(l1 < 1e-6, "{l1}");
    }

    #[test]
    fn symmetry_is_preserved() {
        let g = GridSpec::new(-5.0, 7.0, 1201).unwrap();
        let q = 1.0;
        let v = PotentialSpec::even_poly(vec![q], vec![0.5, 0.1]).unwrap();
        let w = PotentialSpec::even_poly(vec![0.0], vec![0.3, 0.05]).unwrap();
        let input = GridDensity::from_fn(g, |x| (-(x - q).powi(2)).exp() * (1.0 + 0.2 * (x - q).powi(2))).unwrap();
        let out = apply_pi(&input, &v, &w, 0.9).unwrap();
        let n = g.n;
        let worst = (0..n).map(|i| (out.values[i] - out.values[n - 1 - i]).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn edge_peak_is_a_coverage_error() {
        let g = GridSpec::new(3.0, 6.0, 301).unwrap();
        let err = apply_pi(&GridDensity::uniform(g).unwrap(), &quad(1.0), &quad(1.0), 0.5).unwrap_err();
        assert!(matches!(err, Error::GridCoverage(_)));
        let cfg = FixedPointConfig::new(1.0, GridSpec::new(-2.0, 2.0, 401).unwrap());
        assert!(matches!(solve_fixed_point(&quad(1.0), &quad(1.0), &cfg), Err(Error::GridCoverage(_))));
    }

    #[test]
    fn no_interaction_converges_after_one_full_step() {
        let mut cfg = FixedPointConfig::new(1.0, grid());
        cfg.damping = 1.0;
        let (rho, diag) = solve_fixed_point(&quad(1.0), &PotentialSpec::zero(1).unwrap(), &cfg).unwrap();
        assert_eq!(diag.iterations, 1);
        assert!(diag.residuals[1] < cfg.tol);
        assert!((rho.variance() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn distances() {
        let g = grid();
        let a = GridDensity::gaussian(g, 0.0, 0.5).unwrap();
        assert_eq!(density_distance(&a, &a).unwrap(), (0.0, 0.0));
        let b = GridDensity::gaussian(g, 0.5, 0.5).unwrap();
        let (_, w2) = density_distance(&a, &b).unwrap();
        assert!((w2 - 0.5).abs() < 1e-3, "{w2}");
        let c = GridDensity::gaussian(g, 0.0, 0.6).unwrap();
        let (_, w2) = density_distance(&a, &c).unwrap();
        assert!((w2 - 0.1).abs() < 1e-3, "{w2}");
        let other = GridDensity::uniform(GridSpec::new(-6.0, 6.0, 2000).unwrap()).unwrap();
        assert!(density_distance(&a, &other).is_err());
    }

    #[test]
    fn fixed_point_residual_within_tol() {
        let cfg = FixedPointConfig::new(0.7, grid());
        let w = PotentialSpec::even_poly(vec![0.0], vec![0.5, 0.1]).unwrap();
        let v = PotentialSpec::even_poly(vec![0.3], vec![0.5, 0.05]).unwrap();
        let (rho, diag) = solve_fixed_point(&v, &w, &cfg).unwrap();
        assert!(!diag.damping_warning);
        assert!(fixed_point_residual(&rho, &v, &w, 0.7).unwrap() <= cfg.tol);
        assert!((rho.integral() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn concentration_as_noise_vanishes() {
        let d: Vec<f64> = [1.0, 0.5, 0.25]
            .iter()
            .map(|s| {
                let (rho, _) = solve_fixed_point(&quad(1.0), &quad(1.0), &FixedPointConfig::new(*s, grid())).unwrap();
                rho.w2_to_point(0.0)
            })
            .collect();
        assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
    }
}
