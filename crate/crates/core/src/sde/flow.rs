use serde::{Deserialize, Serialize};

use super::process::{check_pair, Diffusion, Frozen, SelfInteracting};
use super::{SimConfig, MAX_BUFFER_LEN};
use crate::error::{ensure_finite, Error, Result};
use crate::potentials::{dist_sq, PotentialSpec};

/// A set in state space that a flow can be tested against.
pub trait Region: Sync {
    fn contains(&self, x: &[f64]) -> bool;
}

impl<F: Fn(&[f64]) -> bool + Sync> Region for F {
    fn contains(&self, x: &[f64]) -> bool {
        self(x)
    }
}

/// Settings for the zero-noise flows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub t_end: f64,
    /// Coarsest Euler step; the path is reported on this grid.
    pub dt: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_halvings")]
    pub max_halvings: usize,
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
}

fn default_tol() -> f64 {
    1e-6
}

fn default_halvings() -> usize {
    3
}

fn default_warmup() -> usize {
    10
}

impl FlowConfig {
    pub fn new(t_end: f64, dt: f64) -> Self {
        Self {
            t_end,
            dt,
            tol: default_tol(),
            max_halvings: default_halvings(),
            warmup_steps: default_warmup(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.t_end.is_finite() && self.dt < self.t_end) {
            return Err(Error::Config(format!("flow needs 0 < dt < t_end, got dt = {}, t_end = {}", self.dt, self.t_end)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("flow tolerance must be positive".into()));
        }
        if self.warmup_steps == 0 {
            return Err(Error::Config("warmup_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// A refined zero-noise path.
#[derive(Debug, Clone, Serialize)]
pub struct FlowPath {
    pub dim: usize,
    pub times: Vec<f64>,
    /// Flat `times.len() × dim` positions.
    pub points: Vec<f64>,
    /// Finest Euler step used.
    pub dt: f64,
    pub halvings: usize,
    /// Max change of the path between the last two refinement levels.
    pub refinement_difference: f64,
    /// `|φ_{t_end} − target|`, the target being the minimizer of `V` for the
    /// self-interacting flow and `m` for the frozen one.
    pub terminal_distance: f64,
    /// Whether every point with `t > 0` lies in the supplied region.
    pub stays_in: Option<bool>,
}

impl FlowPath {
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn final_point(&self) -> &[f64] {
        self.point(self.times.len() - 1)
    }
}

/// `φ̇_t = −∇V(φ_t) − (1/t) ∫₀ᵗ ∇W(φ_t − φ_s) ds`, `φ_0 = x0`.
///
/// The step is halved until two successive Richardson-extrapolated paths
/// agree to `config.tol`, at most `config.max_halvings` times.
pub fn deterministic_flow(
    v: &PotentialSpec,
    w: &PotentialSpec,
    x0: &[f64],
    config: &FlowConfig,
    region: Option<&dyn Region>,
) -> Result<FlowPath> {
    check_pair(v, w)?;
    config.validate()?;
    ensure_finite("x0", x0)?;
    let target = v.minimizer();
    refine(x0.len(), config, &target, region, |dt, every, out| {
        let n = (config.t_end / dt).round() as u64;
        let stride = if w.is_quadratic() || w.is_zero() {
            1
        } else {
            (n as usize).div_ceil(MAX_BUFFER_LEN / 5).max(1)
        };
        let mut sim = SimConfig::new(0.0, dt, config.t_end, x0.to_vec(), 0);
        sim.decimation_stride = stride;
        sim.warmup_steps = config.warmup_steps;
        let mut p = SelfInteracting::new(v, w, &sim)?;
        run_flow(&mut p, n, every, out)
    })
}

/// `ρ̇_t = −∇V(ρ_t) − ∇W(ρ_t − m)`, `ρ_0 = x`, refined as in [`deterministic_flow`].
pub fn frozen_flow(
    v: &PotentialSpec,
    w: &PotentialSpec,
    m: &[f64],
    x: &[f64],
    config: &FlowConfig,
    region: Option<&dyn Region>,
) -> Result<FlowPath> {
    check_pair(v, w)?;
    config.validate()?;
    ensure_finite("x", x)?;
    if m.len() != x.len() || x.len() != v.dim() {
        return Err(Error::Config("m, x and the potentials must share one dimension".into()));
    }
    refine(x.len(), config, m, region, |dt, every, out| {
        let n = (config.t_end / dt).round() as u64;
        let mut p = Frozen::from_parts(v, w, m, 0.0, dt, x.to_vec(), 0);
        run_flow(&mut p, n, every, out)
    })
}

fn run_flow<D: Diffusion>(p: &mut D, n: u64, every: u64, out: &mut Vec<f64>) -> Result<()> {
    let zero = vec![0.0; p.dim()];
    out.clear();
    out.extend_from_slice(p.position());
    while p.step_count() < n {
        p.advance(&zero)?;
        if p.step_count() % every == 0 {
            out.extend_from_slice(p.position());
        }
    }
    Ok(())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn refine(
    dim: usize,
    config: &FlowConfig,
    target: &[f64],
    region: Option<&dyn Region>,
    mut level: impl FnMut(f64, u64, &mut Vec<f64>) -> Result<()>,
) -> Result<FlowPath> {
    let n0 = (config.t_end / config.dt).round() as u64;
    let times: Vec<f64> = (0..=n0).map(|i| i as f64 * config.dt).collect();

    let mut prev_plain: Vec<f64> = Vec::new();
    let mut prev_rich: Option<Vec<f64>> = None;
    let mut last_diff = f64::INFINITY;
    let mut buf = Vec::new();
    let mut accepted: Option<(Vec<f64>, usize, f64)> = None;

    for j in 0..=config.max_halvings {
        let every = 1u64 << j;
        level(config.dt / every as f64, every, &mut buf)?;
        debug_assert_eq!(buf.len(), times.len() * dim);
        if j >= 1 {
            let plain_diff = max_abs_diff(&buf, &prev_plain);
            if plain_diff < config.tol {
                accepted = Some((buf.clone(), j, plain_diff));
                break;
            }
            let rich: Vec<f64> = buf.iter().zip(&prev_plain).map(|(f, c)| 2.0 * f - c).collect();
            if let Some(pr) = &prev_rich {
                last_diff = max_abs_diff(&rich, pr);
                if last_diff < config.tol {
                    accepted = Some((rich, j, last_diff));
                    break;
                }
            } else {
                last_diff = plain_diff;
            }
            prev_rich = Some(rich);
        }
        std::mem::swap(&mut prev_plain, &mut buf);
    }

    let Some((points, halvings, diff)) = accepted else {
        return Err(Error::Accuracy {
            difference: last_diff,
            halvings: config.max_halvings,
            tol: config.tol,
        });
    };
    let last = &points[points.len() - dim..];
    let terminal_distance = dist_sq(last, target).sqrt();
    let stays_in = region.map(|r| points.chunks(dim).skip(1).all(|p| r.contains(p)));
    Ok(FlowPath {
        dim,
        times,
        points,
        dt: config.dt / (1u64 << halvings) as f64,
        halvings,
        refinement_difference: diff,
        terminal_distance,
        stays_in,
    })
}
