//! Numerical checks of the structural assumptions on `V` and `W`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::{dist_sq, norm, PotentialSpec};
use crate::error::{Error, Result};

/// Minimum radius the sample grid must reach around the minimizer of `V`.
pub const MIN_GRID_RADIUS: f64 = 10.0;

/// Sample points laid out along rays from a centre.
#[derive(Debug, Clone)]
pub struct SampleGrid {
    pub center: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
}

impl SampleGrid {
    /// `n_radii` evenly spaced radii in `(0, max_radius]` along `n_directions` unit rays.
    ///
    /// In 1-D the rays are `±1`; in 2-D they are evenly spaced angles; above
    /// that the coordinate axes are followed by seeded Gaussian directions.
    pub fn rays(center: Vec<f64>, max_radius: f64, n_radii: usize, n_directions: usize) -> Self {
        let d = center.len();
        let directions = unit_directions(d, n_directions);
        let radii = (1..=n_radii).map(|i| max_radius * i as f64 / n_radii as f64).collect();
        Self { center, directions, radii }
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        self.directions.iter().flat_map(move |u| {
            self.radii
                .iter()
                .map(move |r| self.center.iter().zip(u).map(|(c, ui)| c + r * ui).collect())
        })
    }

    pub fn len(&self) -> usize {
        self.directions.len() * self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub(crate) fn unit_directions(d: usize, n: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..n.max(1))
            .map(|i| {
                let theta = std::f64::consts::TAU * i as f64 / n.max(1) as f64;
                vec![theta.cos(), theta.sin()]
            })
            .collect(),
        _ => {
            let mut dirs = Vec::with_capacity(n.max(2 * d));
            for i in 0..d {
                for sign in [1.0, -1.0] {
                    let mut u = vec![0.0; d];
                    u[i] = sign;
                    dirs.push(u);
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_d1ec);
            while dirs.len() < n {
                let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let r = norm(&g);
                if r > 1e-12 {
                    dirs.push(g.iter().map(|x| x / r).collect());
                }
            }
            dirs
        }
    }
}

/// Outcome of one assumption check.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Per-assumption pass/fail report with the fitted constants.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
    /// `C` such that `|f|, |∇f|, ‖∇²f‖ ≤ C (1 + |x|^{2k})` for `f ∈ {V, W}` on the grid.
    pub growth_constant: f64,
    /// Log-log slope of `max |V| + |W|` against the radius, over radii ≥ 1.
    pub growth_exponent: f64,
    /// Minimum Hessian eigenvalue of `V` on the grid (finite differences).
    pub min_curvature_v: f64,
    /// Minimum Hessian eigenvalue of `W` on the grid (finite differences).
    pub min_curvature_w: f64,
    /// Grid maximum of `ΔV / V` over points where `V > 0`.
    pub laplacian_constant: f64,
    pub grid_points: usize,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Checks regularity/positivity, polynomial growth, uniform convexity,
/// coercivity and the Laplacian bound for the pair `(V, W)` on `grid`.
///
/// `W` is sampled at the grid points shifted to the origin, i.e. at `x − center`.
pub fn validate_assumptions(v: &PotentialSpec, w: &PotentialSpec, grid: &SampleGrid) -> Result<ValidationReport> {
    if grid.is_empty() {
        return Err(Error::Config("validation grid is empty".into()));
    }
    let d = v.dim();
    if w.dim() != d || grid.center.len() != d {
        return Err(Error::Config("validation grid, V and W must share a dimension".into()));
    }
    let m = v.minimizer();
    let reach = grid.radii.iter().cloned().fold(0.0, f64::max) - dist_sq(&grid.center, &m).sqrt();
    if reach < MIN_GRID_RADIUS - 1e-12 {
        return Err(Error::Config(format!(
            "validation grid reaches radius {reach} around the minimizer, need at least {MIN_GRID_RADIUS}"
        )));
    }

    let mut checks = Vec::new();
    let k2 = v.growth_degree.max(w.growth_degree) as i32;

    // Positivity and global minimum.
    let v_min = v.value(&m);
    let w_min = w.value(&vec![0.0; d]);
    let mut positivity = v_min >= 0.0 && w_min >= 0.0;
    let mut min_ok = true;
    let mut growth_c: f64 = 0.0;
    let mut v_lap_ratio: f64 = 0.0;
    let mut min_eig_v = f64::INFINITY;
    let mut min_eig_w = f64::INFINITY;
    for x in grid.points() {
        let z: Vec<f64> = x.iter().zip(&grid.center).map(|(a, b)| a - b).collect();
        let (fv, fw) = (v.value(&x), w.value(&z));
        positivity &= fv >= 0.0 && fw >= 0.0;
        min_ok &= fv >= v_min && fw >= w_min;

        let dom = 1.0 + norm(&x).powi(k2);
        let gv = v.gradient(&x)?;
        let gw = w.gradient(&z)?;
        let hv = spectral_norm(&v.hessian(&x), d);
        let hw = spectral_norm(&w.hessian(&z), d);
        growth_c = growth_c
            .max((fv.abs() + fw.abs()) / dom)
            .max((norm(&gv) + norm(&gw)) / dom)
            .max((hv + hw) / dom);

        min_eig_v = min_eig_v.min(fd_min_eigenvalue(v, &x));
        min_eig_w = min_eig_w.min(fd_min_eigenvalue(w, &z));

        if fv > 0.0 {
            v_lap_ratio = v_lap_ratio.max(v.laplacian(&x) / fv);
        }
    }
    min_eig_v = min_eig_v.min(fd_min_eigenvalue(v, &m));
    min_eig_w = min_eig_w.min(fd_min_eigenvalue(w, &vec![0.0; d]));

    checks.push(AssumptionCheck {
        name: "positivity",
        passed: positivity && min_ok,
        detail: format!("V(m) = {v_min}, W(0) = {w_min}; all grid values non-negative and above the minimum: {}", positivity && min_ok),
    });

    let exponent = growth_exponent(v, w, grid);
    let growth_ok = growth_c.is_finite() && exponent <= k2 as f64 + 0.25;
    checks.push(AssumptionCheck {
        name: "polynomial_growth",
        passed: growth_ok,
        detail: format!("fitted C = {growth_c:.6e} for degree {k2}; log-log growth exponent {exponent:.4}"),
    });

    let tol_v = 1e-6 * (1.0 + v.convexity_lower_bound.abs());
    let tol_w = 1e-6 * (1.0 + w.convexity_lower_bound.abs());
    let curv_ok = min_eig_v >= v.convexity_lower_bound - tol_v
        && min_eig_w >= w.convexity_lower_bound - tol_w
        && v.convexity_lower_bound > 0.0
        && w.convexity_lower_bound > 0.0;
    checks.push(AssumptionCheck {
        name: "uniform_convexity",
        passed: curv_ok,
        detail: format!(
            "min eig ∇²V = {min_eig_v:.6e} (declared {}), min eig ∇²W = {min_eig_w:.6e} (declared {})",
            v.convexity_lower_bound, w.convexity_lower_bound
        ),
    });

    let (coercive, coercive_detail) = coercivity(v, grid);
    checks.push(AssumptionCheck {
        name: "coercivity",
        passed: coercive,
        detail: coercive_detail,
    });

    checks.push(AssumptionCheck {
        name: "laplacian_bound",
        passed: v_lap_ratio.is_finite() && v_lap_ratio > 0.0,
        detail: format!("ΔV ≤ a V on the grid with fitted a = {v_lap_ratio:.6e}"),
    });

    checks.push(AssumptionCheck {
        name: "interaction_minimizer",
        passed: w.ensure_interaction().is_ok(),
        detail: format!("minimizer of W = {:?}", w.minimizer()),
    });

    Ok(ValidationReport {
        checks,
        growth_constant: growth_c,
        growth_exponent: exponent,
        min_curvature_v: min_eig_v,
        min_curvature_w: min_eig_w,
        laplacian_constant: v_lap_ratio,
        grid_points: grid.len(),
    })
}

fn spectral_norm(h: &[f64], d: usize) -> f64 {
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, h));
    eig.eigenvalues.iter().fold(0.0f64, |a, e| a.max(e.abs()))
}

/// Smallest eigenvalue of the central-difference Hessian built from the gradient.
fn fd_min_eigenvalue(spec: &PotentialSpec, x: &[f64]) -> f64 {
    let d = x.len();
    let h = 1e-5 * (1.0 + norm(x));
    let mut m = DMatrix::<f64>::zeros(d, d);
    let mut gp = vec![0.0; d];
    let mut gm = vec![0.0; d];
    let mut xp = x.to_vec();
    for j in 0..d {
        xp[j] = x[j] + h;
        spec.gradient_into(&xp, &mut gp);
        xp[j] = x[j] - h;
        spec.gradient_into(&xp, &mut gm);
        xp[j] = x[j];
        for i in 0..d {
            m[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    let sym = (&m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn growth_exponent(v: &PotentialSpec, w: &PotentialSpec, grid: &SampleGrid) -> f64 {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &r in grid.radii.iter().filter(|r| **r >= 1.0) {
        let mut worst: f64 = 0.0;
        for u in &grid.directions {
            let x: Vec<f64> = grid.center.iter().zip(u).map(|(c, ui)| c + r * ui).collect();
            let z: Vec<f64> = u.iter().map(|ui| r * ui).collect();
            worst = worst.max(v.value(&x).abs() + w.value(&z).abs());
        }
        if worst > 0.0 {
            xs.push(r.ln());
            ys.push(worst.ln());
        }
    }
    least_squares_slope(&xs, &ys)
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return f64::NAN;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// `V` increases along every ray and `|∇V|²/V` is non-decreasing in the radius.
fn coercivity(v: &PotentialSpec, grid: &SampleGrid) -> (bool, String) {
    let mut increasing = true;
    let mut ratio_monotone = true;
    let mut ratio_min = f64::INFINITY;
    let mut ratio_max: f64 = 0.0;
    for u in &grid.directions {
        let mut prev_v = f64::NEG_INFINITY;
        let mut prev_ratio = f64::NEG_INFINITY;
        for &r in &grid.radii {
            let x: Vec<f64> = grid.center.iter().zip(u).map(|(c, ui)| c + r * ui).collect();
            let fv = v.value(&x);
            if fv <= prev_v {
                increasing = false;
            }
            prev_v = fv;
            if fv > 0.0 {
                let g = norm(&v.gradient(&x).unwrap_or_default());
                let ratio = g * g / fv;
                if ratio < prev_ratio * (1.0 - 1e-9) {
                    ratio_monotone = false;
                }
                ratio_min = ratio_min.min(ratio);
                ratio_max = ratio_max.max(ratio);
                prev_ratio = ratio;
            }
        }
    }
    (
        increasing && ratio_monotone,
        format!(
            "V increasing along rays: {increasing}; |∇V|²/V non-decreasing: {ratio_monotone} (range {ratio_min:.6e} .. {ratio_max:.6e})"
        ),
    )
}
