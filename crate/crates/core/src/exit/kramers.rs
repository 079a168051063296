use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{exit_cost, first_exit, Domain, DomainSpec, ExitCost, ExitRecord};
use crate::error::{Error, Result};
use crate::potentials::{dist_sq, PotentialSpec};
use crate::sde::{deterministic_flow, frozen_flow, BrownianSource, FlowConfig, SelfInteracting, SimConfig};
use crate::seed::derive_seed;

/// `dt(σ) = min(cap, σ² / divisor)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtPolicy {
    pub cap: f64,
    pub divisor: f64,
}

impl Default for DtPolicy {
    fn default() -> Self {
        Self { cap: 1e-3, divisor: 100.0 }
    }
}

impl DtPolicy {
    pub fn dt(&self, sigma: f64) -> f64 {
        self.cap.min(sigma * sigma / self.divisor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KramersConfig {
    /// Strictly decreasing noise levels.
    pub sigmas: Vec<f64>,
    pub replicas: usize,
    /// Half-width of the window `e^{2(H−δ)/σ²} ≤ τ ≤ e^{2(H+δ)/σ²}`.
    pub delta: f64,
    #[serde(default)]
    pub dt_policy: DtPolicy,
    /// `t_max(σ) = t_max_factor · e^{2(H+δ)/σ²}`; must be at least 1.
    #[serde(default = "default_t_max_factor")]
    pub t_max_factor: f64,
    pub master_seed: u64,
    /// Starting point; `m` when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Cap on the worst-case total number of Euler steps.
    #[serde(default = "default_budget")]
    pub step_budget: f64,
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
    /// Horizon of the zero-noise flow checks run before the sweep.
    #[serde(default = "default_flow_horizon")]
    pub flow_horizon: f64,
    #[serde(default = "default_boundary_samples")]
    pub boundary_samples: usize,
}

fn default_t_max_factor() -> f64 {
    3.0
}

fn default_budget() -> f64 {
    1e10
}

fn default_warmup() -> usize {
    10
}

fn default_flow_horizon() -> f64 {
    20.0
}

fn default_boundary_samples() -> usize {
    16
}

impl KramersConfig {
    pub fn new(sigmas: Vec<f64>, replicas: usize, delta: f64, master_seed: u64) -> Self {
        Self {
            sigmas,
            replicas,
            delta,
            dt_policy: DtPolicy::default(),
            t_max_factor: default_t_max_factor(),
            master_seed,
            x0: None,
            step_budget: default_budget(),
            warmup_steps: default_warmup(),
            flow_horizon: default_flow_horizon(),
            boundary_samples: default_boundary_samples(),
        }
    }

    pub fn t_max(&self, h: f64, sigma: f64) -> f64 {
        self.t_max_factor * (2.0 * (h + self.delta) / (sigma * sigma)).exp()
    }

    /// Checks everything that does not need the potentials.
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() || self.sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config("sigmas must be a non-empty list of positive numbers".into()));
        }
        if self.sigmas.windows(2).any(|s| s[0] <= s[1]) {
            return Err(Error::Config(format!("sigmas must be strictly decreasing, got {:?}", self.sigmas)));
        }
        if self.replicas == 0 {
            return Err(Error::Config("replicas must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.t_max_factor >= 1.0 && self.t_max_factor.is_finite()) {
            return Err(Error::Config(format!(
                "t_max_factor = {} would cut the exit window short; it must be >= 1",
                self.t_max_factor
            )));
        }
        if !(self.dt_policy.cap > 0.0 && self.dt_policy.divisor > 0.0) {
            return Err(Error::Config("dt policy needs a positive cap and divisor".into()));
        }
        Ok(())
    }
}

/// Worst-case number of Euler steps of a sweep (every replica running to `t_max`).
pub fn estimated_steps(h: f64, config: &KramersConfig) -> f64 {
    config
        .sigmas
        .iter()
        .map(|s| config.replicas as f64 * (config.t_max(h, *s) / config.dt_policy.dt(*s)).ceil())
        .sum()
}

/// Outcome of the zero-noise checks on a candidate domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowAssumptionReport {
    pub horizon: f64,
    /// The self-interacting flow from the start point stays in the domain.
    pub flow_stays_in: bool,
    pub flow_terminal_distance: f64,
    /// The frozen flows from every boundary sample enter and stay in the domain.
    pub frozen_stay_in: bool,
    /// Largest `|ρ_T(x) − m| / |x − m|` over the boundary samples.
    pub frozen_worst_contraction: f64,
    pub boundary_points: usize,
    pub passed: bool,
    /// The checks cover `[0, horizon]` plus closeness to `m` at the horizon,
    /// not the whole half-line.
    pub note: &'static str,
}

/// Relative distance to `m` the flows must reach by the horizon.
pub const FLOW_CONTRACTION: f64 = 0.1;

pub fn check_flow_assumptions(
    v: &PotentialSpec,
    w: &PotentialSpec,
    domain: &Domain,
    x0: &[f64],
    horizon: f64,
    boundary_samples: usize,
) -> Result<FlowAssumptionReport> {
    let m = domain.m().to_vec();
    let fc = FlowConfig::new(horizon, 1e-3);
    let phi = deterministic_flow(v, w, x0, &fc, Some(domain))?;
    let start = dist_sq(x0, &m).sqrt();
    let flow_ok = phi.stays_in == Some(true) && phi.terminal_distance <= FLOW_CONTRACTION * start + 1e-9;
    let boundary = domain.boundary_samples(boundary_samples)?;
    let results: Vec<(bool, f64)> = boundary
        .par_iter()
        .map(|x| {
            let f = frozen_flow(v, w, &m, x, &fc, Some(domain))?;
            let r = dist_sq(x, &m).sqrt();
            Ok((f.stays_in == Some(true), f.terminal_distance / r))
        })
        .collect::<Result<_>>()?;
    let frozen_stay_in = results.iter().all(|r| r.0);
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(FlowAssumptionReport {
        horizon,
        flow_stays_in: phi.stays_in == Some(true),
        flow_terminal_distance: phi.terminal_distance,
        frozen_stay_in,
        frozen_worst_contraction: worst,
        boundary_points: boundary.len(),
        passed: flow_ok && frozen_stay_in && worst <= FLOW_CONTRACTION,
        note: "checked on a finite horizon with terminal proximity to m",
    })
}

/// Aggregates of one noise level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KramersRow {
    pub sigma: f64,
    pub dt: f64,
    pub t_max: f64,
    pub replicas: usize,
    /// Quantiles treat timed-out replicas as `τ = +∞`.
    pub median_tau: f64,
    /// Mean of `min(τ, t_max)`.
    pub mean_tau: f64,
    pub q10: f64,
    pub q90: f64,
    /// `(σ²/2) log(median τ)`.
    pub rate: f64,
    pub h: f64,
    pub window_delta: f64,
    pub in_window_fraction: f64,
    pub timed_out_count: usize,
    pub degenerate_count: usize,
    /// False when more than half of the replicas timed out.
    pub usable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct KramersResult {
    pub cost: ExitCost,
    pub delta: f64,
    pub rows: Vec<KramersRow>,
    #[serde(skip)]
    pub records: Vec<Vec<ExitRecord>>,
    /// `|rate − H|` is non-increasing along the usable rows up to one inversion.
    pub gap_trend_ok: bool,
    /// The in-window fraction is non-decreasing along the usable rows.
    pub window_trend_ok: bool,
    pub flow_check: FlowAssumptionReport,
}

fn censored_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Number of index pairs where `seq` increases.
pub(crate) fn inversions(seq: &[f64]) -> usize {
    seq.windows(2).filter(|p| p[1] > p[0]).count()
}

/// First exits of the self-interacting diffusion from `domain` for each σ.
///
/// The flow checks run first and the sweep refuses to start when they fail.
/// The step budget is checked before any simulation.
pub fn kramers_sweep(
    v: &PotentialSpec,
    w: &PotentialSpec,
    domain_spec: &DomainSpec,
    config: &KramersConfig,
) -> Result<KramersResult> {
    config.validate()?;
    let m = v.minimizer();
    let domain = Domain::new(domain_spec.clone(), v, w, &m)?;
    let cost = exit_cost(&domain)?;
    let h = cost.h;
    let est = estimated_steps(h, config);
    if est > config.step_budget {
        return Err(Error::Budget {
            estimated: est,
            cap: config.step_budget,
        });
    }
    let x0 = config.x0.clone().unwrap_or_else(|| m.clone());
    if x0.len() != m.len() || !domain.contains(&x0) {
        return Err(Error::Config(format!("start point {x0:?} is not inside the domain")));
    }
    let flow_check = check_flow_assumptions(v, w, &domain, &x0, config.flow_horizon, config.boundary_samples)?;
    if !flow_check.passed {
        return Err(Error::Config(format!("domain fails the zero-noise flow checks: {flow_check:?}")));
    }

    let mut rows = Vec::with_capacity(config.sigmas.len());
    let mut records = Vec::with_capacity(config.sigmas.len());
    for (i, &sigma) in config.sigmas.iter().enumerate() {
        let dt = config.dt_policy.dt(sigma);
        let t_max = config.t_max(h, sigma);
        let row_seed = derive_seed(config.master_seed, "kramers-row", i as u64);
        let mut sim = SimConfig::new(sigma, dt, t_max, x0.clone(), row_seed).with_auto_stride();
        sim.warmup_steps = config.warmup_steps;
        let recs: Vec<ExitRecord> = (0..config.replicas as u64)
            .into_par_iter()
            .map(|r| {
                let mut p = SelfInteracting::new(v, w, &sim)?;
                let mut noise = BrownianSource::new(row_seed, r, m.len(), dt);
                first_exit(&mut p, &mut noise, &domain, t_max, r)
            })
            .collect::<Result<_>>()?;
        rows.push(aggregate(sigma, dt, t_max, h, config.delta, &recs));
        records.push(recs);
    }

    let usable: Vec<&KramersRow> = rows.iter().filter(|r| r.usable).collect();
    let gaps: Vec<f64> = usable.iter().map(|r| (r.rate - h).abs()).collect();
    let windows: Vec<f64> = usable.iter().map(|r| -r.in_window_fraction).collect();
    Ok(KramersResult {
        cost,
        delta: config.delta,
        gap_trend_ok: inversions(&gaps) <= 1,
        window_trend_ok: inversions(&windows) == 0,
        rows,
        records,
        flow_check,
    })
}

fn aggregate(sigma: f64, dt: f64, t_max: f64, h: f64, delta: f64, recs: &[ExitRecord]) -> KramersRow {
    let n = recs.len();
    let mut taus: Vec<f64> = recs.iter().map(|r| if r.timed_out { f64::INFINITY } else { r.tau }).collect();
    taus.sort_by(f64::total_cmp);
    let timed_out = recs.iter().filter(|r| r.timed_out).count();
    let degenerate = recs.iter().filter(|r| r.degenerate_start).count();
    let lo = (2.0 * (h - delta) / (sigma * sigma)).exp();
    let hi = (2.0 * (h + delta) / (sigma * sigma)).exp();
    let in_window = recs.iter().filter(|r| !r.timed_out && r.tau >= lo && r.tau <= hi).count();
    let median = censored_quantile(&taus, 0.5);
    KramersRow {
        sigma,
        dt,
        t_max,
        replicas: n,
        median_tau: median,
        mean_tau: recs.iter().map(|r| r.tau.min(t_max)).sum::<f64>() / n as f64,
        q10: censored_quantile(&taus, 0.1),
        q90: censored_quantile(&taus, 0.9),
        rate: 0.5 * sigma * sigma * median.ln(),
        h,
        window_delta: delta,
        in_window_fraction: in_window as f64 / n as f64,
        timed_out_count: timed_out,
        degenerate_count: degenerate,
        usable: 2 * timed_out <= n,
    }
}
