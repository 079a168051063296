//! Confinement and interaction potentials.
//!
//! Potentials come from a closed family so that gradients, Hessians and exit
//! costs have exact closed forms:
//!
//! * [`PotentialKind::Quadratic`]: `½ Σ cᵢ (xᵢ − centerᵢ)²` with a diagonal
//!   curvature (isotropic when every `cᵢ` is equal);
//! * [`PotentialKind::EvenPoly`]: `Σⱼ aⱼ |x − center|^{2(j+1)}`;
//! * [`PotentialKind::Radial`]: `G(|x|)` for a [`RadialProfile`] `G`;
//! * [`PotentialKind::Zero`]: the null interaction.
//!
//! Every member attains its minimum value 0 at its centre, so `V ≥ 0` and
//! `W ≥ 0` hold by construction.

mod validate;

pub use validate::{validate_assumptions, AssumptionCheck, SampleGrid, ValidationReport, MIN_GRID_RADIUS};
pub(crate) use validate::unit_directions;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Radial profile `G` of a rotationally invariant potential `W(x) = G(|x|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum RadialProfile {
    /// `G(r) = Σⱼ aⱼ r^{2(j+1)}`.
    EvenPolynomial { coeffs: Vec<f64> },
    /// `G(r) = A (cosh(r / ℓ) − 1)`. Uniformly convex, but grows exponentially.
    Cosh { amplitude: f64, length: f64 },
}

impl RadialProfile {
    fn value(&self, r: f64) -> f64 {
        match self {
            RadialProfile::EvenPolynomial { coeffs } => even_series(coeffs, r * r),
            RadialProfile::Cosh { amplitude, length } => amplitude * ((r / length).cosh() - 1.0),
        }
    }

    /// Returns `(G'(r) / r, G''(r))`, both finite at `r = 0`.
    fn derivatives(&self, r: f64) -> (f64, f64) {
        match self {
            RadialProfile::EvenPolynomial { coeffs } => {
                let r2 = r * r;
                let mut slope_over_r = 0.0;
                let mut second = 0.0;
                let mut pow = 1.0; // r^{p-2}
                for (j, a) in coeffs.iter().enumerate() {
                    let p = 2.0 * (j as f64 + 1.0);
                    slope_over_r += a * p * pow;
                    second += a * p * (p - 1.0) * pow;
                    pow *= r2;
                }
                (slope_over_r, second)
            }
            RadialProfile::Cosh { amplitude, length } => {
                let u = r / length;
                let sinhc = if u.abs() < 1e-6 {
                    1.0 + u * u / 6.0
                } else {
                    u.sinh() / u
                };
                let scale = amplitude / (length * length);
                (scale * sinhc, scale * u.cosh())
            }
        }
    }

    fn hessian_norm_bound(&self, radius: f64) -> f64 {
        // Both eigenvalues are increasing in r and G'' dominates G'/r.
        self.derivatives(radius.abs()).1
    }
}

/// `Σⱼ aⱼ s^{j+1}` evaluated by Horner's rule in `s = r²`.
fn even_series(coeffs: &[f64], s: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, a| (acc + a) * s)
}

/// The functional form of a potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    Quadratic { center: Vec<f64>, curvature: Vec<f64> },
    EvenPoly { center: Vec<f64>, coeffs: Vec<f64> },
    Radial { dim: usize, profile: RadialProfile },
    /// Identically zero. Only meaningful as an interaction that switches the
    /// self-interaction off; it is not uniformly convex.
    Zero { dim: usize },
}

/// A potential together with its declared structural constants.
///
/// `growth_degree` is the degree `2k` of the dominating polynomial and
/// `convexity_lower_bound` the declared uniform lower bound on the Hessian.
/// Both are declarations: [`validate_assumptions`] checks them against the
/// actual function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub growth_degree: u32,
    pub convexity_lower_bound: f64,
}

impl PotentialSpec {
    /// Isotropic quadratic `½ c |x − center|²`.
    pub fn quadratic(center: Vec<f64>, curvature: f64) -> Result<Self> {
        let d = center.len();
        Self::quadratic_diag(center, vec![curvature; d])
    }

    /// Quadratic `½ Σ cᵢ (xᵢ − centerᵢ)²` with a per-axis curvature.
    pub fn quadratic_diag(center: Vec<f64>, curvature: Vec<f64>) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::Config("potential dimension must be at least 1".into()));
        }
        if curvature.len() != center.len() {
            return Err(Error::Config(format!(
                "curvature has {} entries for a {}-dimensional centre",
                curvature.len(),
                center.len()
            )));
        }
        ensure_finite("centre", &center)?;
        if curvature.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::Config(format!("curvatures must be positive, got {curvature:?}")));
        }
        let lower = curvature.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(Self {
            kind: PotentialKind::Quadratic { center, curvature },
            growth_degree: 2,
            convexity_lower_bound: lower,
        })
    }

    /// `Σⱼ coeffs[j] |x − center|^{2(j+1)}`.
    pub fn even_poly(center: Vec<f64>, coeffs: Vec<f64>) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::Config("potential dimension must be at least 1".into()));
        }
        ensure_finite("centre", &center)?;
        validate_coeffs(&coeffs)?;
        let lower = 2.0 * coeffs[0];
        let growth = 2 * coeffs.len() as u32;
        Ok(Self {
            kind: PotentialKind::EvenPoly { center, coeffs },
            growth_degree: growth,
            convexity_lower_bound: lower,
        })
    }

    /// `G(|x|)` on `ℝ^dim`.
    pub fn radial(dim: usize, profile: RadialProfile) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("potential dimension must be at least 1".into()));
        }
        let (lower, growth) = match &profile {
            RadialProfile::EvenPolynomial { coeffs } => {
                validate_coeffs(coeffs)?;
                (2.0 * coeffs[0], 2 * coeffs.len() as u32)
            }
            RadialProfile::Cosh { amplitude, length } => {
                if !(*amplitude > 0.0 && *length > 0.0 && amplitude.is_finite() && length.is_finite()) {
                    return Err(Error::Config("cosh profile needs positive amplitude and length".into()));
                }
                (amplitude / (length * length), 2)
            }
        };
        Ok(Self {
            kind: PotentialKind::Radial { dim, profile },
            growth_degree: growth,
            convexity_lower_bound: lower,
        })
    }

    /// The null potential on `ℝ^dim`.
    pub fn zero(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("potential dimension must be at least 1".into()));
        }
        Ok(Self {
            kind: PotentialKind::Zero { dim },
            growth_degree: 2,
            convexity_lower_bound: 0.0,
        })
    }

    /// True for the null potential.
    pub fn is_zero(&self) -> bool {
        matches!(self.kind, PotentialKind::Zero { .. })
    }

    /// Overrides the declared convexity bound.
    pub fn with_declared_convexity(mut self, bound: f64) -> Self {
        self.convexity_lower_bound = bound;
        self
    }

    /// Overrides the declared growth degree `2k`.
    pub fn with_growth_degree(mut self, degree: u32) -> Self {
        self.growth_degree = degree;
        self
    }

    /// Checks that this potential may serve as an interaction potential:
    /// its minimizer must be the origin.
    pub fn ensure_interaction(&self) -> Result<()> {
        if self.minimizer().iter().any(|c| *c != 0.0) {
            return Err(Error::Config(format!(
                "interaction potential must be minimal at 0, got minimizer {:?}",
                self.minimizer()
            )));
        }
        Ok(())
    }

    /// Builds an interaction potential, rejecting minimizers other than 0.
    pub fn into_interaction(self) -> Result<Self> {
        self.ensure_interaction()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            PotentialKind::Quadratic { center, .. } | PotentialKind::EvenPoly { center, .. } => center.len(),
            PotentialKind::Radial { dim, .. } | PotentialKind::Zero { dim } => *dim,
        }
    }

    pub fn minimizer(&self) -> Vec<f64> {
        match &self.kind {
            PotentialKind::Quadratic { center, .. } | PotentialKind::EvenPoly { center, .. } => center.clone(),
            PotentialKind::Radial { dim, .. } | PotentialKind::Zero { dim } => vec![0.0; *dim],
        }
    }

    /// `k` in the growth degree `2k`.
    pub fn growth_k(&self) -> u32 {
        (self.growth_degree / 2).max(1)
    }

    /// True for a quadratic potential; the interaction drift then has an O(1) form.
    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, PotentialKind::Quadratic { .. })
    }

    /// True when the potential is invariant under rotations about the origin.
    pub fn is_rotation_invariant(&self) -> bool {
        match &self.kind {
            PotentialKind::Radial { .. } | PotentialKind::Zero { .. } => true,
            PotentialKind::EvenPoly { center, .. } => center.iter().all(|c| *c == 0.0),
            PotentialKind::Quadratic { center, curvature } => {
                center.iter().all(|c| *c == 0.0) && curvature.iter().all(|c| *c == curvature[0])
            }
        }
    }

    /// Checked evaluation.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.value(x))
    }

    /// Checked gradient.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut g = vec![0.0; x.len()];
        self.gradient_into(x, &mut g);
        Ok(g)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Usage(format!(
                "point has dimension {}, potential has dimension {}",
                x.len(),
                self.dim()
            )));
        }
        ensure_finite("x", x)
    }

    /// Unchecked evaluation; `x.len()` must equal [`Self::dim`].
    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            PotentialKind::Quadratic { center, curvature } => {
                0.5 * x
                    .iter()
                    .zip(center)
                    .zip(curvature)
                    .map(|((xi, ci), ki)| ki * (xi - ci) * (xi - ci))
                    .sum::<f64>()
            }
            PotentialKind::EvenPoly { center, coeffs } => even_series(coeffs, dist_sq(x, center)),
            PotentialKind::Radial { profile, .. } => profile.value(norm(x)),
            PotentialKind::Zero { .. } => 0.0,
        }
    }

    /// Unchecked gradient written into `out`.
    #[inline]
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            PotentialKind::Quadratic { center, curvature } => {
                for i in 0..x.len() {
                    out[i] = curvature[i] * (x[i] - center[i]);
                }
            }
            PotentialKind::EvenPoly { center, coeffs } => {
                let s = dist_sq(x, center);
                let mut factor = 0.0;
                let mut pow = 1.0;
                for (j, a) in coeffs.iter().enumerate() {
                    factor += a * 2.0 * (j as f64 + 1.0) * pow;
                    pow *= s;
                }
                for i in 0..x.len() {
                    out[i] = factor * (x[i] - center[i]);
                }
            }
            PotentialKind::Radial { profile, .. } => {
                let (slope_over_r, _) = profile.derivatives(norm(x));
                for i in 0..x.len() {
                    out[i] = slope_over_r * x[i];
                }
            }
            PotentialKind::Zero { .. } => out.fill(0.0),
        }
    }

    /// Analytic Hessian, row-major `d × d`.
    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let mut h = vec![0.0; d * d];
        match &self.kind {
            PotentialKind::Quadratic { curvature, .. } => {
                for i in 0..d {
                    h[i * d + i] = curvature[i];
                }
            }
            PotentialKind::EvenPoly { center, coeffs } => {
                let z: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
                let s = dist_sq(x, center);
                // ∇²|z|^p = p|z|^{p-2} I + p(p-2)|z|^{p-4} z zᵀ
                let mut iso = 0.0;
                let mut outer = 0.0;
                let mut pow = 1.0; // s^{j}
                for (j, a) in coeffs.iter().enumerate() {
                    let p = 2.0 * (j as f64 + 1.0);
                    iso += a * p * pow;
                    if j >= 1 {
                        outer += a * p * (p - 2.0) * pow / s.max(f64::MIN_POSITIVE);
                    }
                    pow *= s;
                }
                if s == 0.0 {
                    outer = 0.0;
                }
                fill_radial_hessian(&mut h, &z, iso, outer);
            }
            PotentialKind::Radial { profile, .. } => {
                let r = norm(x);
                let (slope_over_r, second) = profile.derivatives(r);
                let outer = if r > 0.0 { (second - slope_over_r) / (r * r) } else { 0.0 };
                fill_radial_hessian(&mut h, x, slope_over_r, outer);
            }
            PotentialKind::Zero { .. } => {}
        }
        h
    }

    /// Upper bound of the Hessian operator norm over the ball `|x − minimizer| ≤ radius`.
    pub fn hessian_norm_bound(&self, radius: f64) -> f64 {
        match &self.kind {
            PotentialKind::Quadratic { curvature, .. } => curvature.iter().cloned().fold(0.0, f64::max),
            PotentialKind::EvenPoly { coeffs, .. } => {
                RadialProfile::EvenPolynomial { coeffs: coeffs.clone() }.hessian_norm_bound(radius)
            }
            PotentialKind::Radial { profile, .. } => profile.hessian_norm_bound(radius),
            PotentialKind::Zero { .. } => 0.0,
        }
    }

    /// Laplacian `tr ∇²f(x)`.
    pub fn laplacian(&self, x: &[f64]) -> f64 {
        let d = x.len();
        let h = self.hessian(x);
        (0..d).map(|i| h[i * d + i]).sum()
    }
}

fn validate_coeffs(coeffs: &[f64]) -> Result<()> {
    if coeffs.is_empty() {
        return Err(Error::Config("even polynomial needs at least one coefficient".into()));
    }
    if coeffs.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(Error::Config(format!(
            "even polynomial coefficients must be finite and non-negative, got {coeffs:?}"
        )));
    }
    if coeffs.iter().all(|c| *c == 0.0) {
        return Err(Error::Config("even polynomial is identically zero".into()));
    }
    Ok(())
}

fn fill_radial_hessian(h: &mut [f64], z: &[f64], iso: f64, outer: f64) {
    let d = z.len();
    for i in 0..d {
        for j in 0..d {
            h[i * d + j] = outer * z[i] * z[j] + if i == j { iso } else { 0.0 };
        }
    }
}

#[inline]
pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `W_m(x) − V(m) = V(x) + W(x − m) − V(m)`: the potential seen by the frozen
/// diffusion, shifted so that its minimum value is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectivePotential {
    pub v: PotentialSpec,
    pub w: PotentialSpec,
    pub m: Vec<f64>,
    v_at_m: f64,
}

impl EffectivePotential {
    pub fn new(v: &PotentialSpec, w: &PotentialSpec, m: &[f64]) -> Result<Self> {
        w.ensure_interaction()?;
        if v.dim() != w.dim() || m.len() != v.dim() {
            return Err(Error::Config(format!(
                "dimension mismatch: V is {}-D, W is {}-D, m is {}-D",
                v.dim(),
                w.dim(),
                m.len()
            )));
        }
        let v_at_m = v.eval(m)?;
        Ok(Self {
            v: v.clone(),
            w: w.clone(),
            m: m.to_vec(),
            v_at_m,
        })
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        let mut shifted = [0.0f64; 8];
        let v = self.v.value(x);
        let w = if x.len() <= shifted.len() {
            for i in 0..x.len() {
                shifted[i] = x[i] - self.m[i];
            }
            self.w.value(&shifted[..x.len()])
        } else {
            let z: Vec<f64> = x.iter().zip(&self.m).map(|(a, b)| a - b).collect();
            self.w.value(&z)
        };
        v + w - self.v_at_m
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let mut g = vec![0.0; d];
        let mut gw = vec![0.0; d];
        self.v.gradient_into(x, &mut g);
        let z: Vec<f64> = x.iter().zip(&self.m).map(|(a, b)| a - b).collect();
        self.w.gradient_into(&z, &mut gw);
        for i in 0..d {
            g[i] += gw[i];
        }
        g
    }

    /// Upper bound on the gradient norm over the ball of the given radius about `m`.
    pub fn lipschitz_bound(&self, radius: f64) -> f64 {
        let hv = self.v.hessian_norm_bound(radius + dist_sq(&self.m, &self.v.minimizer()).sqrt());
        let hw = self.w.hessian_norm_bound(radius);
        (hv + hw) * radius
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quartic_1d() -> PotentialSpec {
        PotentialSpec::even_poly(vec![0.0], vec![0.5, 0.25]).unwrap()
    }

    #[test]
    fn eval_examples() {
        let q = PotentialSpec::quadratic(vec![0.0], 1.0).unwrap();
        assert_eq!(q.eval(&[2.0]).unwrap(), 2.0);
        let m = vec![0.3, -1.2];
        let q = PotentialSpec::quadratic(m.clone(), 2.5).unwrap();
        assert_eq!(q.eval(&m).unwrap(), 0.0);
        assert_eq!(quartic_1d().eval(&[1.0]).unwrap(), 0.75);
    }

    #[test]
    fn eval_rejects_non_finite() {
        let q = PotentialSpec::quadratic(vec![0.0], 1.0).unwrap();
        assert!(matches!(q.eval(&[f64::NAN]), Err(Error::NonFinite(_))));
        assert!(matches!(q.gradient(&[f64::INFINITY]), Err(Error::NonFinite(_))));
        assert!(matches!(q.eval(&[0.0, 1.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn gradient_examples() {
        let q = PotentialSpec::quadratic(vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(q.gradient(&[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);
        // d/dx (x²/2 + x⁴/4) at 2 = 2 + 8
        assert_eq!(quartic_1d().gradient(&[2.0]).unwrap(), vec![10.0]);
        let specs = [
            PotentialSpec::quadratic_diag(vec![1.0, -2.0], vec![1.0, 4.0]).unwrap(),
            PotentialSpec::even_poly(vec![0.5, 0.5], vec![1.0, 0.0, 2.0]).unwrap(),
            PotentialSpec::radial(2, RadialProfile::Cosh { amplitude: 2.0, length: 0.5 }).unwrap(),
            PotentialSpec::radial(3, RadialProfile::EvenPolynomial { coeffs: vec![0.5, 0.1] }).unwrap(),
        ];
        for s in &specs {
            let g = s.gradient(&s.minimizer()).unwrap();
            assert!(g.iter().all(|v| *v == 0.0), "{s:?}: {g:?}");
        }
    }

    #[test]
    fn interaction_must_be_centred_at_origin() {
        let w = PotentialSpec::quadratic(vec![0.1], 1.0).unwrap();
        assert!(w.into_interaction().is_err());
        let w = PotentialSpec::quadratic(vec![0.0], 1.0).unwrap();
        assert!(w.into_interaction().is_ok());
    }

    #[test]
    fn declared_constants() {
        let q = quartic_1d();
        assert_eq!(q.growth_degree, 4);
        assert_eq!(q.convexity_lower_bound, 1.0);
        let aniso = PotentialSpec::quadratic_diag(vec![0.0, 0.0], vec![1.0, 4.0]).unwrap();
        assert_eq!(aniso.convexity_lower_bound, 1.0);
        assert!(!aniso.is_rotation_invariant());
    }

    #[test]
    fn effective_potential_shifts_to_zero() {
        let v = PotentialSpec::quadratic(vec![1.0], 1.0).unwrap();
        let w = PotentialSpec::quadratic(vec![0.0], 1.0).unwrap();
        let eff = EffectivePotential::new(&v, &w, &[1.0]).unwrap();
        assert_eq!(eff.value(&[1.0]), 0.0);
        assert!((eff.value(&[2.0]) - 1.0).abs() < 1e-15);
    }

    fn all_kinds(d: usize) -> Vec<PotentialSpec> {
        let c: Vec<f64> = (0..d).map(|i| 0.25 * i as f64 - 0.1).collect();
        let diag: Vec<f64> = (0..d).map(|i| 1.0 + i as f64).collect();
        vec![
            PotentialSpec::quadratic_diag(c.clone(), diag).unwrap(),
            PotentialSpec::even_poly(c, vec![0.5, 0.25, 0.05]).unwrap(),
            PotentialSpec::radial(d, RadialProfile::Cosh { amplitude: 1.5, length: 0.8 }).unwrap(),
            PotentialSpec::radial(d, RadialProfile::EvenPolynomial { coeffs: vec![1.0, 0.5] }).unwrap(),
        ]
    }

    fn unit_ball_point(d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0f64..1.0, d).prop_map(|v| {
            let n = norm(&v);
            if n > 1.0 {
                v.iter().map(|x| x / n).collect()
            } else {
                v
            }
        })
    }

    proptest! {
        #[test]
        fn gradient_matches_central_differences(d in 1usize..4, seed_pt in unit_ball_point(3)) {
            let h = 1e-5;
            for spec in all_kinds(d) {
                let m = spec.minimizer();
                let x: Vec<f64> = (0..d).map(|i| m[i] + seed_pt[i]).collect();
                let g = spec.gradient(&x).unwrap();
                let scale = norm(&g).max(1.0);
                for i in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (spec.value(&xp) - spec.value(&xm)) / (2.0 * h);
                    prop_assert!((fd - g[i]).abs() <= 1e-6 * scale, "{:?} axis {}: fd {} vs {}", spec.kind, i, fd, g[i]);
                }
            }
        }

        #[test]
        fn hessian_matches_gradient_differences(d in 1usize..4, seed_pt in unit_ball_point(3)) {
            let h = 1e-6;
            for spec in all_kinds(d) {
                let m = spec.minimizer();
                let x: Vec<f64> = (0..d).map(|i| m[i] + seed_pt[i]).collect();
                let hess = spec.hessian(&x);
                for j in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let gp = spec.gradient(&xp).unwrap();
                    let gm = spec.gradient(&xm).unwrap();
                    for i in 0..d {
                        let fd = (gp[i] - gm[i]) / (2.0 * h);
                        prop_assert!((fd - hess[i * d + j]).abs() <= 1e-5 * (1.0 + hess[i * d + j].abs()));
                    }
                }
            }
        }

        #[test]
        fn uniform_convexity_lower_bound(d in 1usize..4, p in prop::collection::vec(-5.0f64..5.0, 3)) {
            for spec in all_kinds(d) {
                let m = spec.minimizer();
                let x: Vec<f64> = (0..d).map(|i| m[i] + p[i]).collect();
                let gap = spec.value(&x) - spec.value(&m);
                let bound = 0.5 * spec.convexity_lower_bound * dist_sq(&x, &m);
                prop_assert!(gap >= bound - 1e-12 * (1.0 + gap.abs()));
            }
        }

        #[test]
        fn radial_is_rotation_invariant(x in prop::collection::vec(-3.0f64..3.0, 3), angles in prop::collection::vec(0.0f64..std::f64::consts::TAU, 3)) {
            let spec = PotentialSpec::radial(3, RadialProfile::Cosh { amplitude: 1.0, length: 1.3 }).unwrap();
            let spec2 = PotentialSpec::radial(3, RadialProfile::EvenPolynomial { coeffs: vec![0.5, 0.2] }).unwrap();
            let rotated = rotate3(&x, &angles);
            for s in [&spec, &spec2] {
                let a = s.value(&x);
                let b = s.value(&rotated);
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }

    fn rotate3(x: &[f64], angles: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        for (axis, &theta) in angles.iter().enumerate() {
            let (i, j) = match axis {
                0 => (0, 1),
                1 => (1, 2),
                _ => (0, 2),
            };
            let (s, c) = theta.sin_cos();
            let (a, b) = (v[i], v[j]);
            v[i] = c * a - s * b;
            v[j] = s * a + c * b;
        }
        v
    }
}
