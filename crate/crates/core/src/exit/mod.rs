//! Exit problems for the small-noise diffusion: domains, exit costs, first
//! exit times, σ-sweeps of `(σ²/2) log τ` and where on the boundary the
//! process leaves.
//!
//! All costs are measured with the effective potential
//! `W_m(x) − V(m) = V(x) + W(x − m) − V(m)`.

mod first_exit;
mod kramers;
mod location;

pub use first_exit::{first_exit, ExitRecord};
pub use kramers::{
    check_flow_assumptions, estimated_steps, kramers_sweep, DtPolicy, FlowAssumptionReport, KramersConfig,
    KramersResult, KramersRow,
};
pub use location::{exit_location_stats, LocationReport, LocationRow, NEAR_ANGLE_DEG};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::potentials::{dist_sq, norm, unit_directions, EffectivePotential, PotentialSpec};
use crate::sde::Region;

/// Shape of an open domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DomainSpec {
    /// `(lo, hi)` on the line.
    Interval { lo: f64, hi: f64 },
    /// Open ball.
    Ball { center: Vec<f64>, radius: f64 },
    /// `{x : W_m(x) − V(m) < level}`.
    LevelSet { level: f64 },
}

/// A [`DomainSpec`] bound to the effective potential of a `(V, W, m)` triple.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Domain {
    spec: DomainSpec,
    eff: EffectivePotential,
}

impl Domain {
    /// Fails unless `m` lies strictly inside the domain.
    pub fn new(spec: DomainSpec, v: &PotentialSpec, w: &PotentialSpec, m: &[f64]) -> Result<Self> {
        let eff = EffectivePotential::new(v, w, m)?;
        let d = eff.dim();
        match &spec {
            DomainSpec::Interval { lo, hi } => {
                if d != 1 {
                    return Err(Error::Config(format!("an interval domain needs a 1-D problem, got {d}-D")));
                }
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::Config(format!("interval needs lo < hi, got ({lo}, {hi})")));
                }
            }
            DomainSpec::Ball { center, radius } => {
                if center.len() != d {
                    return Err(Error::Config(format!("ball centre is {}-D, problem is {d}-D", center.len())));
                }
                ensure_finite("ball centre", center)?;
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::Config(format!("ball radius must be positive, got {radius}")));
                }
            }
            DomainSpec::LevelSet { level } => {
                if !(*level > 0.0 && level.is_finite()) {
                    return Err(Error::Config(format!("level must be positive, got {level}")));
                }
            }
        }
        let domain = Self { spec, eff };
        if !domain.contains(m) {
            return Err(Error::Usage(format!("m = {m:?} is not inside the domain")));
        }
        Ok(domain)
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn effective(&self) -> &EffectivePotential {
        &self.eff
    }

    pub fn m(&self) -> &[f64] {
        &self.eff.m
    }

    pub fn dim(&self) -> usize {
        self.eff.dim()
    }

    /// The level-set domain `{W_m − V(m) < level}` of the same potentials.
    pub fn level_set(&self, level: f64) -> Result<Self> {
        Self::new(DomainSpec::LevelSet { level }, &self.eff.v, &self.eff.w, &self.eff.m)
    }

    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.spec {
            DomainSpec::Interval { lo, hi } => *lo < x[0] && x[0] < *hi,
            DomainSpec::Ball { center, radius } => dist_sq(x, center) < radius * radius,
            DomainSpec::LevelSet { level } => self.eff.value(x) < *level,
        }
    }

    /// Fraction `θ ∈ (0, 1]` of the segment `prev → next` at which it first
    /// leaves the domain; `prev` must be inside and `next` outside. The point
    /// at `θ` is outside the domain.
    pub(crate) fn crossing(&self, prev: &[f64], next: &[f64]) -> f64 {
        let d: Vec<f64> = next.iter().zip(prev).map(|(a, b)| a - b).collect();
        let mut theta = match &self.spec {
            DomainSpec::Interval { lo, hi } => {
                let edge = if next[0] >= *hi { *hi } else { *lo };
                (edge - prev[0]) / d[0]
            }
            DomainSpec::Ball { center, radius } => {
                let a: f64 = d.iter().map(|v| v * v).sum();
                let b: f64 = 2.0 * prev.iter().zip(center).zip(&d).map(|((p, c), v)| (p - c) * v).sum::<f64>();
                let c = dist_sq(prev, center) - radius * radius;
                (-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a)
            }
            DomainSpec::LevelSet { .. } => {
                let (mut lo, mut hi) = (0.0, 1.0);
                for _ in 0..64 {
                    let mid = 0.5 * (lo + hi);
                    if self.contains(&along(prev, &d, mid)) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            }
        };
        theta = theta.clamp(f64::MIN_POSITIVE, 1.0);
        while theta < 1.0 && self.contains(&along(prev, &d, theta)) {
            theta = theta.next_up().min(1.0);
        }
        theta
    }

    /// Points on `∂D`; `n` sets the sampling density on spheres and level sets.
    pub fn boundary_samples(&self, n: usize) -> Result<Vec<Vec<f64>>> {
        match &self.spec {
            DomainSpec::Interval { lo, hi } => Ok(vec![vec![*lo], vec![*hi]]),
            DomainSpec::Ball { center, radius } => Ok(unit_directions(self.dim(), n)
                .into_iter()
                .map(|u| u.iter().zip(center).map(|(a, c)| c + radius * a).collect())
                .collect()),
            DomainSpec::LevelSet { level } => level_set_boundary(&self.eff, *level, n),
        }
    }
}

impl Region for Domain {
    fn contains(&self, x: &[f64]) -> bool {
        Domain::contains(self, x)
    }
}

#[inline]
fn along(p: &[f64], d: &[f64], t: f64) -> Vec<f64> {
    p.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

/// Points where the ray from `m` in direction `u` meets `{W_m − V(m) = level}`.
fn level_set_boundary(eff: &EffectivePotential, level: f64, n: usize) -> Result<Vec<Vec<f64>>> {
    let m = &eff.m;
    unit_directions(eff.dim(), n)
        .into_iter()
        .map(|u| {
            let at = |r: f64| along(m, &u, r);
            let mut hi = 1.0;
            let mut tries = 0;
            while eff.value(&at(hi)) < level {
                hi *= 2.0;
                tries += 1;
                if tries > 60 {
                    return Err(Error::Config(format!("level {level} is not reached along direction {u:?}")));
                }
            }
            let mut lo = 0.0;
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if eff.value(&at(mid)) < level {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(at(0.5 * (lo + hi)))
        })
        .collect()
}

/// Exit cost `H = inf_{∂D} (V + W(· − m) − V(m))` and where it is attained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitCost {
    pub h: f64,
    /// Boundary points attaining `H` (empty for level sets, where every
    /// boundary point does).
    pub minimizers: Vec<Vec<f64>>,
    /// Minimum over the sphere samples (balls in dimension ≥ 2).
    pub sampled_min: Option<f64>,
    /// Set when the sphere samples undercut the optimizer by more than
    /// [`EXIT_COST_AGREEMENT`].
    pub flagged: bool,
}

pub const BALL_STARTS: usize = 64;
pub const SPHERE_SAMPLES: usize = 10_000;
pub const EXIT_COST_AGREEMENT: f64 = 1e-6;

pub fn exit_cost(domain: &Domain) -> Result<ExitCost> {
    let eff = &domain.eff;
    match &domain.spec {
        DomainSpec::LevelSet { level } => Ok(ExitCost {
            h: *level,
            minimizers: Vec::new(),
            sampled_min: None,
            flagged: false,
        }),
        DomainSpec::Interval { lo, hi } => Ok(endpoint_cost(eff, *lo, *hi)),
        DomainSpec::Ball { center, radius } if center.len() == 1 => {
            Ok(endpoint_cost(eff, center[0] - radius, center[0] + radius))
        }
        DomainSpec::Ball { center, radius } => Ok(sphere_cost(eff, center, *radius)),
    }
}

fn endpoint_cost(eff: &EffectivePotential, lo: f64, hi: f64) -> ExitCost {
    let (a, b) = (eff.value(&[lo]), eff.value(&[hi]));
    let h = a.min(b);
    let minimizers = [(lo, a), (hi, b)]
        .iter()
        .filter(|(_, c)| *c <= h + 1e-12 * h.abs().max(1.0))
        .map(|(x, _)| vec![*x])
        .collect();
    ExitCost {
        h,
        minimizers,
        sampled_min: None,
        flagged: false,
    }
}

fn sphere_cost(eff: &EffectivePotential, center: &[f64], radius: f64) -> ExitCost {
    let d = center.len();
    let project = |y: &[f64]| -> Vec<f64> {
        let z: Vec<f64> = y.iter().zip(center).map(|(a, c)| a - c).collect();
        let r = norm(&z);
        z.iter().zip(center).map(|(a, c)| c + radius * a / r).collect()
    };
    let mut found: Vec<(f64, Vec<f64>)> = Vec::with_capacity(BALL_STARTS);
    for u in unit_directions(d, BALL_STARTS) {
        let mut x: Vec<f64> = u.iter().zip(center).map(|(a, c)| c + radius * a).collect();
        let mut f = eff.value(&x);
        let mut eta = radius;
        for _ in 0..10_000 {
            let g = eff.gradient(&x);
            let n: Vec<f64> = x.iter().zip(center).map(|(a, c)| (a - c) / radius).collect();
            let gn: f64 = g.iter().zip(&n).map(|(a, b)| a * b).sum();
            let gt: Vec<f64> = g.iter().zip(&n).map(|(a, b)| a - gn * b).collect();
            if norm(&gt) * radius < 1e-12 {
                break;
            }
            let mut accepted = false;
            while eta > 1e-16 {
                let y = project(&along(&x, &gt, -eta));
                let fy = eff.value(&y);
                if fy < f {
                    let gain = f - fy;
                    x = y;
                    f = fy;
                    eta *= 2.0;
                    accepted = gain > 1e-15 * f.abs().max(1.0);
                    break;
                }
                eta *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        found.push((f, x));
    }
    let h = found.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let mut minimizers: Vec<Vec<f64>> = Vec::new();
    for (f, x) in &found {
        if *f <= h + 1e-8 && minimizers.iter().all(|y| dist_sq(x, y) > 1e-6 * radius * radius) {
            minimizers.push(x.clone());
        }
    }
    let sampled = unit_directions(d, SPHERE_SAMPLES)
        .into_iter()
        .map(|u| {
            let p: Vec<f64> = u.iter().zip(center).map(|(a, c)| c + radius * a).collect();
            eff.value(&p)
        })
        .fold(f64::INFINITY, f64::min);
    ExitCost {
        h,
        minimizers,
        sampled_min: Some(sampled),
        flagged: sampled < h - EXIT_COST_AGREEMENT,
    }
}

/// The level-set domains at `H ± δ/2` and their distances to the level set at `H`.
#[derive(Debug, Clone, Serialize)]
pub struct Enlargement {
    pub h: f64,
    pub delta: f64,
    pub enlarged: Domain,
    pub contracted: Domain,
    /// Sampled minimum distance between `{W_m − V(m) = H + δ/2}` and `{… = H}`.
    pub d_e: f64,
    /// Same for `H − δ/2`.
    pub d_c: f64,
}

/// Directions used to sample level-set boundaries for the gaps.
pub const GAP_SAMPLES: usize = 720;

pub fn enlarge_contract(domain: &Domain, delta: f64) -> Result<Enlargement> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Config(format!("delta must be positive, got {delta}")));
    }
    let h = exit_cost(domain)?.h;
    let low = h - 0.5 * delta;
    if low <= 0.0 {
        return Err(Error::EmptyContraction { exit_cost: h, level: low });
    }
    let enlarged = domain.level_set(h + 0.5 * delta)?;
    let contracted = domain.level_set(low)?;
    let base = level_set_boundary(&domain.eff, h, GAP_SAMPLES)?;
    let gap = |dom: &Domain| -> Result<f64> {
        let pts = dom.boundary_samples(GAP_SAMPLES)?;
        Ok(pts
            .iter()
            .flat_map(|p| base.iter().map(move |q| dist_sq(p, q)))
            .fold(f64::INFINITY, f64::min)
            .sqrt())
    };
    Ok(Enlargement {
        h,
        delta,
        d_e: gap(&enlarged)?,
        d_c: gap(&contracted)?,
        enlarged,
        contracted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad1() -> (PotentialSpec, PotentialSpec) {
        (
            PotentialSpec::quadratic(vec![0.0], 1.0).unwrap(),
            PotentialSpec::quadratic(vec![0.0], 1.0).unwrap(),
        )
    }

    fn aniso() -> (PotentialSpec, PotentialSpec) {
        (
            PotentialSpec::quadratic_diag(vec![0.0, 0.0], vec![1.0, 4.0]).unwrap(),
            PotentialSpec::quadratic(vec![0.0, 0.0], 1.0).unwrap(),
        )
    }

    #[test]
    fn interval_cost() {
        let (v, w) = quad1();
        let d = Domain::new(DomainSpec::Interval { lo: -1.0, hi: 1.0 }, &v, &w, &[0.0]).unwrap();
        let c = exit_cost(&d).unwrap();
        assert_eq!(c.h, 1.0);
        assert_eq!(c.minimizers.len(), 2);
    }

    #[test]
    fn level_set_cost_is_its_level() {
        let (v, w) = aniso();
        let d = Domain::new(DomainSpec::LevelSet { level: 0.7 }, &v, &w, &[0.0, 0.0]).unwrap();
        assert_eq!(exit_cost(&d).unwrap().h, 0.7);
    }

    #[test]
    fn anisotropic_ball_cost() {
        let (v, w) = aniso();
        let spec = DomainSpec::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        let d = Domain::new(spec, &v, &w, &[0.0, 0.0]).unwrap();
        let c = exit_cost(&d).unwrap();
        assert!((c.h - 1.0).abs() < 1e-10, "{c:?}");
        assert!(!c.flagged);
        assert!((c.sampled_min.unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(c.minimizers.len(), 2);
        for x in &c.minimizers {
            assert!((x[0].abs() - 1.0).abs() < 1e-5 && x[1].abs() < 1e-5, "{x:?}");
        }
    }

    #[test]
    fn outside_minimum_is_rejected() {
        let (v, w) = quad1();
        let err = Domain::new(DomainSpec::Interval { lo: 0.5, hi: 1.0 }, &v, &w, &[0.0]).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn enlargement_in_one_dimension() {
        let (v, w) = quad1();
        let d = Domain::new(DomainSpec::Interval { lo: -1.0, hi: 1.0 }, &v, &w, &[0.0]).unwrap();
        let e = enlarge_contract(&d, 0.2).unwrap();
        let pts = e.contracted.boundary_samples(2).unwrap();
        let mut ends: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        ends.sort_by(f64::total_cmp);
        assert!((ends[0] + 0.9f64.sqrt()).abs() < 1e-12 && (ends[1] - 0.9f64.sqrt()).abs() < 1e-12);
        assert!((e.d_e - (1.1f64.sqrt() - 1.0)).abs() < 1e-12);
        assert!((e.d_c - (1.0 - 0.9f64.sqrt())).abs() < 1e-12);
        assert!(matches!(enlarge_contract(&d, 2.5), Err(Error::EmptyContraction { .. })));
    }

    #[test]
    fn crossing_points_lie_outside() {
        let (v, w) = aniso();
        let ball = Domain::new(
            DomainSpec::Ball {
                center: vec![0.0, 0.0],
                radius: 1.0,
            },
            &v,
            &w,
            &[0.0, 0.0],
        )
        .unwrap();
        let prev = [0.6, 0.7];
        let next = [0.7, 0.75];
        let th = ball.crossing(&prev, &next);
        let p = along(&prev, &[0.1, 0.05], th);
        assert!(!ball.contains(&p));
        assert!((norm(&p) - 1.0).abs() < 1e-12);
        let ls = ball.level_set(1.0).unwrap();
        let th = ls.crossing(&[0.0, 0.0], &[2.0, 0.0]);
        assert!((th - 0.5).abs() < 1e-12);
    }
}
