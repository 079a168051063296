use serde::Serialize;

use super::noise::BrownianSource;
use super::process::{check_pair, Diffusion, Frozen, Recorder, SelfInteracting, Trajectory};
use super::SimConfig;
use crate::error::{Error, Result};
use crate::potentials::{norm, PotentialKind, PotentialSpec};

/// `γ(t) = |X_t − Y_t|²` sampled every `decimation_stride` steps.
#[derive(Debug, Clone, Serialize)]
pub struct GapSeries {
    pub replica: u64,
    pub times: Vec<f64>,
    pub gap_sq: Vec<f64>,
}

/// Outcome of the pathwise check
/// `sup |X − Y| ≤ C · sup W₂ₖ(μ_t, δ_m) · (1 + sup |Y|^{2k}) / (α + ρ)`
/// over the window after the switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapBoundCheck {
    pub sup_gap: f64,
    pub sup_w2k: f64,
    pub sup_y_pow: f64,
    pub constant: f64,
    pub bound: f64,
    /// `sup_gap / bound`; zero when both vanish.
    pub ratio: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoupledRun {
    pub x: Trajectory,
    pub y: Trajectory,
    pub gap: GapSeries,
    pub check: GapBoundCheck,
}

/// Constant `C` in `|∇W∗μ(y) − ∇W(y − m)| ≤ C · W₁(μ, δ_m)` for all measures
/// supported in the ball of the given radius about `y`.
///
/// For a quadratic `W` this is the largest curvature, independent of the radius.
pub fn coupling_constant(w: &PotentialSpec, radius: f64) -> f64 {
    match &w.kind {
        PotentialKind::Quadratic { curvature, .. } => curvature.iter().cloned().fold(0.0, f64::max),
        _ => w.hessian_norm_bound(radius),
    }
}

/// Runs `X` and the frozen diffusion `Y` on one Brownian path.
///
/// `Y` equals `X` up to the first step time `≥ t_switch`; from then on it
/// follows the frozen dynamics with the same increments. The supremum of
/// `W₂ₖ(μ_t, δ_m)` is taken over every step for `k = 1` (it is exact and
/// O(1) there) and over the recorded steps for `k > 1`.
pub fn simulate_coupled(
    v: &PotentialSpec,
    w: &PotentialSpec,
    m: &[f64],
    config: &SimConfig,
    t_switch: f64,
    replica: u64,
) -> Result<CoupledRun> {
    check_pair(v, w)?;
    if !(t_switch >= 0.0) {
        return Err(Error::Config(format!("t_switch must be >= 0, got {t_switch}")));
    }
    if m.len() != v.dim() {
        return Err(Error::Config(format!("m has dimension {}, potentials have {}", m.len(), v.dim())));
    }
    let d = v.dim();
    let k = w.growth_k().max(v.growth_k());
    let mut x = SelfInteracting::new(v, w, config)?;
    let mut y: Option<Frozen> = None;
    let mut noise = BrownianSource::new(config.master_seed, replica, d, config.dt);
    let stride = config.decimation_stride.max(1) as u64;
    let mut rec_x = Recorder::new(config.decimation_stride);
    let mut rec_y = Recorder::new(config.decimation_stride);
    let mut gap = GapSeries {
        replica,
        times: Vec::new(),
        gap_sq: Vec::new(),
    };
    let mut db = vec![0.0; d];
    let (mut sup_gap_sq, mut sup_w2k, mut sup_y) = (0.0f64, 0.0f64, 0.0f64);
    let mut sup_x = norm(&config.x0);
    let n = config.n_steps();

    let observe = |x: &SelfInteracting, y: &Option<Frozen>, gap: &mut GapSeries, rec_x: &mut Recorder, rec_y: &mut Recorder, force: bool| {
        let step = x.step_count();
        let yp = y.as_ref().map_or(x.position(), |y| y.position());
        if force {
            rec_x.force(step, x.time(), x.position());
            rec_y.force(step, x.time(), yp);
        } else {
            rec_x.observe(step, x.time(), x.position());
            rec_y.observe(step, x.time(), yp);
        }
        if (step % stride == 0 || force) && gap.times.last() != Some(&x.time()) {
            gap.times.push(x.time());
            gap.gap_sq.push(crate::potentials::dist_sq(x.position(), yp));
        }
    };

    observe(&x, &y, &mut gap, &mut rec_x, &mut rec_y, false);
    while x.step_count() < n {
        if y.is_none() && x.time() >= t_switch {
            y = Some(Frozen::from_parts(v, w, m, config.sigma, config.dt, x.position().to_vec(), x.step_count()));
        }
        if y.is_some() && (k == 1 || x.step_count() % stride == 0) {
            sup_w2k = sup_w2k.max(x.state().buffer.w2k_to_point(m, k));
        }
        noise.fill(&mut db);
        x.advance(&db)?;
        if let Some(yy) = y.as_mut() {
            yy.advance(&db)?;
            sup_gap_sq = sup_gap_sq.max(crate::potentials::dist_sq(x.position(), yy.position()));
            sup_y = sup_y.max(norm(yy.position()));
        }
        sup_x = sup_x.max(norm(x.position()));
        observe(&x, &y, &mut gap, &mut rec_x, &mut rec_y, false);
    }
    observe(&x, &y, &mut gap, &mut rec_x, &mut rec_y, true);

    let rho = v.convexity_lower_bound;
    let alpha = w.convexity_lower_bound;
    let constant = coupling_constant(w, sup_x + sup_y.max(sup_x));
    let sup_y_pow = sup_y.powi(2 * k as i32);
    let bound = constant * sup_w2k * (1.0 + sup_y_pow) / (alpha + rho);
    let sup_gap = sup_gap_sq.sqrt();
    let ratio = if sup_gap == 0.0 { 0.0 } else { sup_gap / bound };
    let check = GapBoundCheck {
        sup_gap,
        sup_w2k,
        sup_y_pow,
        constant,
        bound,
        ratio,
        holds: sup_gap <= bound,
    };

    let decimation = Some(x.decimation_report());
    let (yt, ypos) = match &y {
        Some(yy) => (yy.time(), yy.position().to_vec()),
        None => (x.time(), x.position().to_vec()),
    };
    let state = x.into_state();
    let xtraj = Trajectory {
        dim: d,
        times: rec_x.times,
        points: rec_x.points,
        final_time: state.t,
        final_position: state.x.clone(),
        steps: state.step,
        occupation: state.buffer.to_measure(),
        decimation,
    };
    let ytraj = Trajectory {
        dim: d,
        times: rec_y.times,
        points: rec_y.points,
        final_time: yt,
        final_position: ypos,
        steps: state.step,
        occupation: None,
        decimation: None,
    };
    Ok(CoupledRun {
        x: xtraj,
        y: ytraj,
        gap,
        check,
    })
}
