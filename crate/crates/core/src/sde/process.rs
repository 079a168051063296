use serde::Serialize;

use super::noise::BrownianSource;
use super::state::{OccupationBuffer, TrajectoryState};
use super::SimConfig;
use crate::error::{Error, Result};
use crate::occupation::OccupationMeasure;
use crate::potentials::{norm, PotentialKind, PotentialSpec};

/// The interaction part of the drift, `(1/t) ∫₀ᵗ ∇W(x − X_s) ds`, against the
/// buffer of `state`. Zero when the buffer is empty.
///
/// A quadratic `W` takes the O(1) route `c ⊙ (x − mean)` through the exact
/// running mean; every other `W` sums over the stored samples.
pub fn interaction_drift(state: &TrajectoryState, w: &PotentialSpec) -> Vec<f64> {
    let mut out = vec![0.0; state.dim()];
    let mut scratch = vec![0.0; state.dim()];
    drift_into(&state.x, &state.buffer, w, &mut out, &mut scratch);
    out
}

/// The interaction drift summed sample by sample, whatever the form of `W`.
pub fn interaction_drift_direct(state: &TrajectoryState, w: &PotentialSpec) -> Vec<f64> {
    let mut out = vec![0.0; state.dim()];
    let mut scratch = vec![0.0; state.dim()];
    direct_into(&state.x, &state.buffer, w, &mut out, &mut scratch);
    out
}

#[inline]
fn drift_into(x: &[f64], buffer: &OccupationBuffer, w: &PotentialSpec, out: &mut [f64], scratch: &mut [f64]) {
    if let PotentialKind::Quadratic { curvature, .. } = &w.kind {
        if buffer.mean_into(scratch) {
            for i in 0..x.len() {
                out[i] = curvature[i] * (x[i] - scratch[i]);
            }
        } else {
            out.fill(0.0);
        }
    } else if w.is_zero() {
        out.fill(0.0);
    } else {
        direct_into(x, buffer, w, out, scratch);
    }
}

fn direct_into(x: &[f64], buffer: &OccupationBuffer, w: &PotentialSpec, out: &mut [f64], scratch: &mut [f64]) {
    out.fill(0.0);
    let total = buffer.total_weight();
    if total <= 0.0 {
        return;
    }
    let d = x.len();
    let mut z = [0.0f64; 8];
    let mut zv = Vec::new();
    let z: &mut [f64] = if d <= 8 {
        &mut z[..d]
    } else {
        zv.resize(d, 0.0);
        &mut zv
    };
    for (i, wi) in buffer.weights().iter().enumerate() {
        let p = buffer.point(i);
        for j in 0..d {
            z[j] = x[j] - p[j];
        }
        w.gradient_into(z, scratch);
        for j in 0..d {
            out[j] += wi * scratch[j];
        }
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// One Euler–Maruyama step of the self-interacting diffusion, in place.
///
/// The drift is evaluated against the path up to the current time, then the
/// current position is added to the buffer with weight `dt` and the position
/// is moved. During the first `config.warmup_steps` steps the interaction
/// term is switched off.
pub fn step_self_interacting(
    state: &mut TrajectoryState,
    v: &PotentialSpec,
    w: &PotentialSpec,
    config: &SimConfig,
    db: &[f64],
) -> Result<()> {
    let d = state.dim();
    let mut drift = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut gv = vec![0.0; d];
    advance_si(state, v, w, config.sigma, config.dt, config.warmup_steps as u64, db, &mut drift, &mut scratch, &mut gv)
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn advance_si(
    state: &mut TrajectoryState,
    v: &PotentialSpec,
    w: &PotentialSpec,
    sigma: f64,
    dt: f64,
    warmup: u64,
    db: &[f64],
    drift: &mut [f64],
    scratch: &mut [f64],
    gv: &mut [f64],
) -> Result<()> {
    if state.step < warmup {
        drift.fill(0.0);
    } else {
        drift_into(&state.x, &state.buffer, w, drift, scratch);
    }
    v.gradient_into(&state.x, gv);
    state.buffer.push(state.t, &state.x, dt);
    for i in 0..state.x.len() {
        state.x[i] += -(gv[i] + drift[i]) * dt + sigma * db[i];
    }
    state.step += 1;
    state.t = state.step as f64 * dt;
    if state.x.iter().any(|c| !c.is_finite()) {
        return Err(Error::Explosion {
            step: state.step,
            time: state.t,
        });
    }
    Ok(())
}

/// A time-stepped diffusion driven by externally supplied Brownian increments.
pub trait Diffusion {
    fn dim(&self) -> usize;
    fn time(&self) -> f64;
    fn position(&self) -> &[f64];
    fn step_count(&self) -> u64;
    /// Advances one step with increment `db ~ √dt · N(0, I)`.
    fn advance(&mut self, db: &[f64]) -> Result<()>;
}

/// Stepper for the self-interacting diffusion.
#[derive(Debug, Clone)]
pub struct SelfInteracting<'a> {
    v: &'a PotentialSpec,
    w: &'a PotentialSpec,
    sigma: f64,
    dt: f64,
    warmup: u64,
    state: TrajectoryState,
    drift: Vec<f64>,
    scratch: Vec<f64>,
    gv: Vec<f64>,
    max_radius: f64,
}

impl<'a> SelfInteracting<'a> {
    pub fn new(v: &'a PotentialSpec, w: &'a PotentialSpec, config: &SimConfig) -> Result<Self> {
        check_pair(v, w)?;
        config.validate(v.dim())?;
        let d = v.dim();
        Ok(Self {
            v,
            w,
            sigma: config.sigma,
            dt: config.dt,
            warmup: config.warmup_steps as u64,
            state: TrajectoryState::new(config.x0.clone(), config.decimation_stride),
            drift: vec![0.0; d],
            scratch: vec![0.0; d],
            gv: vec![0.0; d],
            max_radius: norm(&config.x0),
        })
    }

    pub fn state(&self) -> &TrajectoryState {
        &self.state
    }

    pub fn into_state(self) -> TrajectoryState {
        self.state
    }

    /// Bound on `Lip(∇W)` over all differences of visited points.
    pub fn visited_lipschitz(&self) -> f64 {
        self.w.hessian_norm_bound(2.0 * self.max_radius)
    }

    pub fn decimation_report(&self) -> DecimationReport {
        let lip = self.visited_lipschitz();
        let ext = self.state.buffer.max_block_extent();
        DecimationReport {
            stride: self.state.buffer.stride(),
            max_block_displacement: ext,
            lipschitz_bound: lip,
            drift_error_bound: lip * ext,
        }
    }
}

impl Diffusion for SelfInteracting<'_> {
    fn dim(&self) -> usize {
        self.state.dim()
    }

    fn time(&self) -> f64 {
        self.state.t
    }

    fn position(&self) -> &[f64] {
        &self.state.x
    }

    fn step_count(&self) -> u64 {
        self.state.step
    }

    #[inline]
    fn advance(&mut self, db: &[f64]) -> Result<()> {
        advance_si(
            &mut self.state,
            self.v,
            self.w,
            self.sigma,
            self.dt,
            self.warmup,
            db,
            &mut self.drift,
            &mut self.scratch,
            &mut self.gv,
        )?;
        self.max_radius = self.max_radius.max(norm(&self.state.x));
        Ok(())
    }
}

/// Stepper for the frozen diffusion `dY = σ dB − ∇V(Y) dt − ∇W(Y − m) dt`.
#[derive(Debug, Clone)]
pub struct Frozen<'a> {
    v: &'a PotentialSpec,
    w: &'a PotentialSpec,
    m: Vec<f64>,
    sigma: f64,
    dt: f64,
    t: f64,
    step: u64,
    y: Vec<f64>,
    gv: Vec<f64>,
    gw: Vec<f64>,
    z: Vec<f64>,
}

impl<'a> Frozen<'a> {
    pub fn new(v: &'a PotentialSpec, w: &'a PotentialSpec, m: &[f64], config: &SimConfig) -> Result<Self> {
        check_pair(v, w)?;
        config.validate(v.dim())?;
        if m.len() != v.dim() {
            return Err(Error::Config(format!("m has dimension {}, potentials have {}", m.len(), v.dim())));
        }
        Ok(Self::from_parts(v, w, m, config.sigma, config.dt, config.x0.clone(), 0))
    }

    pub(crate) fn from_parts(
        v: &'a PotentialSpec,
        w: &'a PotentialSpec,
        m: &[f64],
        sigma: f64,
        dt: f64,
        y: Vec<f64>,
        step: u64,
    ) -> Self {
        let d = y.len();
        Self {
            v,
            w,
            m: m.to_vec(),
            sigma,
            dt,
            t: step as f64 * dt,
            step,
            y,
            gv: vec![0.0; d],
            gw: vec![0.0; d],
            z: vec![0.0; d],
        }
    }
}

impl Diffusion for Frozen<'_> {
    fn dim(&self) -> usize {
        self.y.len()
    }

    fn time(&self) -> f64 {
        self.t
    }

    fn position(&self) -> &[f64] {
        &self.y
    }

    fn step_count(&self) -> u64 {
        self.step
    }

    #[inline]
    fn advance(&mut self, db: &[f64]) -> Result<()> {
        for i in 0..self.y.len() {
            self.z[i] = self.y[i] - self.m[i];
        }
        self.v.gradient_into(&self.y, &mut self.gv);
        self.w.gradient_into(&self.z, &mut self.gw);
        for i in 0..self.y.len() {
            self.y[i] += -(self.gv[i] + self.gw[i]) * self.dt + self.sigma * db[i];
        }
        self.step += 1;
        self.t = self.step as f64 * self.dt;
        if self.y.iter().any(|c| !c.is_finite()) {
            return Err(Error::Explosion {
                step: self.step,
                time: self.t,
            });
        }
        Ok(())
    }
}

pub(crate) fn check_pair(v: &PotentialSpec, w: &PotentialSpec) -> Result<()> {
    w.ensure_interaction()?;
    if v.dim() != w.dim() {
        return Err(Error::Config(format!("V is {}-D but W is {}-D", v.dim(), w.dim())));
    }
    Ok(())
}

/// Effect of path decimation on the interaction drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecimationReport {
    pub stride: usize,
    /// Largest spread of raw positions inside one stored block.
    pub max_block_displacement: f64,
    /// Bound on `Lip(∇W)` over differences of visited points.
    pub lipschitz_bound: f64,
    /// `lipschitz_bound · max_block_displacement`: bound on the drift change
    /// caused by decimation.
    pub drift_error_bound: f64,
}

/// A simulated path sampled every `stride` steps, plus its end state.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub dim: usize,
    pub times: Vec<f64>,
    /// Flat `times.len() × dim` positions.
    pub points: Vec<f64>,
    pub final_time: f64,
    pub final_position: Vec<f64>,
    pub steps: u64,
    /// Occupation measure of the path (self-interacting runs only).
    #[serde(skip)]
    pub occupation: Option<OccupationMeasure>,
    pub decimation: Option<DecimationReport>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
}

pub(crate) struct Recorder {
    stride: u64,
    pub times: Vec<f64>,
    pub points: Vec<f64>,
    last: Option<u64>,
}

impl Recorder {
    pub fn new(stride: usize) -> Self {
        Self {
            stride: stride.max(1) as u64,
            times: Vec::new(),
            points: Vec::new(),
            last: None,
        }
    }

    #[inline]
    pub fn observe(&mut self, step: u64, t: f64, x: &[f64]) {
        if step % self.stride == 0 {
            self.force(step, t, x);
        }
    }

    pub fn force(&mut self, step: u64, t: f64, x: &[f64]) {
        if self.last != Some(step) {
            self.times.push(t);
            self.points.extend_from_slice(x);
            self.last = Some(step);
        }
    }
}

fn drive<D: Diffusion>(
    process: &mut D,
    noise: &mut BrownianSource,
    n_steps: u64,
    rec: &mut Recorder,
    mut stop: impl FnMut(&D) -> bool,
) -> Result<()> {
    let mut db = vec![0.0; process.dim()];
    rec.observe(process.step_count(), process.time(), process.position());
    while process.step_count() < n_steps {
        noise.fill(&mut db);
        process.advance(&db)?;
        rec.observe(process.step_count(), process.time(), process.position());
        if stop(process) {
            break;
        }
    }
    rec.force(process.step_count(), process.time(), process.position());
    Ok(())
}

/// Simulates replica `replica` of the self-interacting diffusion until
/// `t_end` or until `stop` returns true, whichever is first.
pub fn simulate_self_interacting(
    v: &PotentialSpec,
    w: &PotentialSpec,
    config: &SimConfig,
    replica: u64,
    mut stop: impl FnMut(&TrajectoryState) -> bool,
) -> Result<Trajectory> {
    let mut process = SelfInteracting::new(v, w, config)?;
    let mut noise = BrownianSource::new(config.master_seed, replica, v.dim(), config.dt);
    let mut rec = Recorder::new(config.decimation_stride);
    drive(&mut process, &mut noise, config.n_steps(), &mut rec, |p| stop(p.state()))?;
    let decimation = Some(process.decimation_report());
    let state = process.into_state();
    Ok(Trajectory {
        dim: state.dim(),
        times: rec.times,
        points: rec.points,
        final_time: state.t,
        final_position: state.x.clone(),
        steps: state.step,
        occupation: state.buffer.to_measure(),
        decimation,
    })
}

/// Simulates replica `replica` of the frozen diffusion started at `config.x0`.
pub fn simulate_frozen(
    v: &PotentialSpec,
    w: &PotentialSpec,
    m: &[f64],
    config: &SimConfig,
    replica: u64,
) -> Result<Trajectory> {
    let mut process = Frozen::new(v, w, m, config)?;
    let mut noise = BrownianSource::new(config.master_seed, replica, v.dim(), config.dt);
    let mut rec = Recorder::new(config.decimation_stride);
    drive(&mut process, &mut noise, config.n_steps(), &mut rec, |_| false)?;
    Ok(Trajectory {
        dim: process.dim(),
        times: rec.times,
        points: rec.points,
        final_time: process.time(),
        final_position: process.position().to_vec(),
        steps: process.step_count(),
        occupation: None,
        decimation: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(c: f64) -> PotentialSpec {
        PotentialSpec::quadratic(vec![0.0], c).unwrap()
    }

    fn quartic_w() -> PotentialSpec {
        PotentialSpec::even_poly(vec![0.0, 0.0], vec![0.5, 0.25]).unwrap()
    }

    #[test]
    fn drift_vanishes_on_coincident_buffer() {
        let mut s = TrajectoryState::new(vec![0.4, -1.0], 1);
        for i in 0..4 {
            s.buffer.push(i as f64, &[0.4, -1.0], 0.1);
        }
        assert_eq!(interaction_drift(&s, &quartic_w()), vec![0.0, 0.0]);
        let wq = PotentialSpec::quadratic(vec![0.0, 0.0], 2.0).unwrap();
        // the quadratic path goes through the running mean, exact up to rounding
        assert!(interaction_drift(&s, &wq).iter().all(|c| c.abs() < 1e-15));
    }

    #[test]
    fn drift_is_zero_on_empty_buffer() {
        let s = TrajectoryState::new(vec![3.0, 1.0], 1);
        assert_eq!(interaction_drift(&s, &quartic_w()), vec![0.0, 0.0]);
    }

    #[test]
    fn quadratic_drift_pulls_toward_mean() {
        let mut s = TrajectoryState::new(vec![2.0], 1);
        s.buffer.push(0.0, &[1.0], 1.0);
        s.buffer.push(1.0, &[-2.0], 2.0);
        // mean = -1, drift = 0.5 * (2 - (-1))
        let w = quad(0.5);
        assert!((interaction_drift(&s, &w)[0] - 1.5).abs() < 1e-15);
        assert!((interaction_drift_direct(&s, &w)[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn three_point_brute_force() {
        let w = quartic_w();
        let pts = [[0.1, 0.2], [-0.5, 0.7], [1.2, -0.3]];
        let wts = [0.2, 0.3, 0.5];
        let x = [0.25, -0.6];
        let mut s = TrajectoryState::new(x.to_vec(), 1);
        for (i, p) in pts.iter().enumerate() {
            s.buffer.push(i as f64, p, wts[i]);
        }
        let mut expect = [0.0; 2];
        for (p, wi) in pts.iter().zip(wts) {
            let g = w.gradient(&[x[0] - p[0], x[1] - p[1]]).unwrap();
            expect[0] += wi * g[0];
            expect[1] += wi * g[1];
        }
        let got = interaction_drift(&s, &w);
        for j in 0..2 {
            assert!((got[j] - expect[j]).abs() <= 1e-15, "{got:?} vs {expect:?}");
        }
    }

    #[test]
    fn euler_steps() {
        let v = quad(1.0);
        let w = quad(1.0);
        let cfg = SimConfig::new(0.0, 0.1, 1.0, vec![1.0], 0);
        let mut s = TrajectoryState::new(vec![1.0], 1);
        step_self_interacting(&mut s, &v, &w, &cfg, &[0.0]).unwrap();
        assert!((s.x[0] - 0.9).abs() < 1e-15);
        assert_eq!(s.step, 1);
        assert!((s.t - 0.1).abs() < 1e-15);
        assert_eq!(s.buffer.points(), &[1.0]);

        // past the warm-up: confinement and interaction superpose linearly
        let mut cfg = cfg;
        cfg.warmup_steps = 1;
        let mut s = TrajectoryState::new(vec![1.0], 1);
        s.step = 1;
        s.buffer.push(0.0, &[-1.0], 0.1);
        s.buffer.push(0.0, &[1.0], 0.1);
        step_self_interacting(&mut s, &v, &w, &cfg, &[0.0]).unwrap();
        // mean 0 before the push: x' = 1 − (1 + 1)·0.1
        assert!((s.x[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_is_fixed() {
        let m = vec![0.5, -0.25];
        let v = PotentialSpec::quadratic(m.clone(), 2.0).unwrap();
        let w = quartic_w();
        let cfg = SimConfig::new(0.7, 0.01, 1.0, m.clone(), 0);
        let mut s = TrajectoryState::new(m.clone(), 1);
        s.buffer.push(0.0, &m, 0.01);
        s.step = 20;
        step_self_interacting(&mut s, &v, &w, &cfg, &[0.0, 0.0]).unwrap();
        assert_eq!(s.x, m);
    }

    #[test]
    fn explosion_is_reported() {
        let v = PotentialSpec::even_poly(vec![0.0], vec![0.0, 1.0]).unwrap();
        let w = quad(1.0);
        let cfg = SimConfig::new(0.0, 1.0, 100.0, vec![10.0], 0);
        let err = simulate_self_interacting(&v, &w, &cfg, 0, |_| false).unwrap_err();
        assert!(matches!(err, Error::Explosion { .. }), "{err}");
    }

    #[test]
    fn exact_step_count_and_determinism() {
        let v = quad(1.0);
        let w = quad(0.5);
        let cfg = SimConfig::new(0.5, 0.01, 0.03, vec![0.2], 11);
        let a = simulate_self_interacting(&v, &w, &cfg, 2, |_| false).unwrap();
        assert_eq!(a.steps, 3);
        assert_eq!(a.len(), 4);
        let cfg = SimConfig::new(0.5, 0.01, 5.0, vec![0.2], 11);
        let a = simulate_self_interacting(&v, &w, &cfg, 2, |_| false).unwrap();
        let b = simulate_self_interacting(&v, &w, &cfg, 2, |_| false).unwrap();
        assert_eq!(a.points, b.points);
        assert_eq!(a.final_position, b.final_position);
        let c = simulate_self_interacting(&v, &w, &cfg, 3, |_| false).unwrap();
        assert_ne!(a.points, c.points);
    }

    #[test]
    fn stop_predicate_halts_early() {
        let v = quad(1.0);
        let w = quad(1.0);
        let cfg = SimConfig::new(0.3, 0.01, 10.0, vec![0.0], 1);
        let t = simulate_self_interacting(&v, &w, &cfg, 0, |s| s.step >= 17).unwrap();
        assert_eq!(t.steps, 17);
        assert_eq!(t.occupation.unwrap().len(), 17);
    }

    #[test]
    fn frozen_zero_noise_decay() {
        let v = quad(1.0);
        let w = quad(0.5);
        let dt = 1e-4;
        let cfg = SimConfig::new(0.0, dt, 1.0, vec![1.0], 0);
        let tr = simulate_frozen(&v, &w, &[0.0], &cfg, 0).unwrap();
        let exact = (-1.5f64).exp();
        assert!((tr.final_position[0] - exact).abs() < 2.0 * dt);
        let cfg = SimConfig::new(0.0, dt, 1.0, vec![0.0], 0);
        let tr = simulate_frozen(&v, &w, &[0.0], &cfg, 0).unwrap();
        assert!(tr.points.iter().all(|p| *p == 0.0));
    }
}
