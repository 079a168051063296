//! Time stepping for the self-interacting diffusion
//!
//! ```text
//! dX_t = σ dB_t − ( ∇V(X_t) + (1/t) ∫₀ᵗ ∇W(X_t − X_s) ds ) dt
//! ```
//!
//! and for the companions used to study it: the frozen diffusion whose
//! occupation measure is replaced by `δ_m`, the pair `(X, Y)` coupled through
//! one Brownian path, and the zero-noise flows.
//!
//! All stochastic integrators are explicit Euler–Maruyama. The path integral
//! is carried by an [`OccupationBuffer`]; see its docs for the decimation rule.

mod coupled;
mod flow;
mod noise;
mod process;
mod state;

pub use coupled::{coupling_constant, simulate_coupled, CoupledRun, GapBoundCheck, GapSeries};
pub use flow::{deterministic_flow, frozen_flow, FlowConfig, FlowPath, Region};
pub use noise::{BrownianSource, BROWNIAN_TAG};
pub use process::{
    interaction_drift, interaction_drift_direct, simulate_frozen, simulate_self_interacting, step_self_interacting, DecimationReport,
    Diffusion, Frozen, SelfInteracting, Trajectory,
};
pub use state::{OccupationBuffer, TrajectoryState};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Parameters of one simulated path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Noise amplitude `σ ≥ 0`.
    pub sigma: f64,
    /// Euler step.
    pub dt: f64,
    pub t_end: f64,
    pub x0: Vec<f64>,
    pub master_seed: u64,
    /// Number of raw steps aggregated into one stored path sample.
    #[serde(default = "default_stride")]
    pub decimation_stride: usize,
    /// Steps at the start of the path during which the interaction drift is off.
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
}

fn default_stride() -> usize {
    1
}

fn default_warmup() -> usize {
    10
}

/// Path buffers are kept at or below this many samples by [`SimConfig::with_auto_stride`].
pub const MAX_BUFFER_LEN: usize = 100_000;

impl SimConfig {
    pub fn new(sigma: f64, dt: f64, t_end: f64, x0: Vec<f64>, master_seed: u64) -> Self {
        Self {
            sigma,
            dt,
            t_end,
            x0,
            master_seed,
            decimation_stride: default_stride(),
            warmup_steps: default_warmup(),
        }
    }

    /// Number of Euler steps needed to reach `t_end`.
    pub fn n_steps(&self) -> u64 {
        (self.t_end / self.dt).round().max(0.0) as u64
    }

    /// Picks the smallest stride that keeps the path buffer within [`MAX_BUFFER_LEN`].
    pub fn with_auto_stride(mut self) -> Self {
        let n = self.n_steps() as usize;
        self.decimation_stride = n.div_ceil(MAX_BUFFER_LEN).max(1);
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be finite and >= 0, got {}", self.sigma)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.dt < self.t_end) {
            return Err(Error::Config(format!("need dt < t_end, got dt = {}, t_end = {}", self.dt, self.t_end)));
        }
        if self.decimation_stride == 0 {
            return Err(Error::Config("decimation_stride must be >= 1".into()));
        }
        if self.warmup_steps == 0 {
            return Err(Error::Config("warmup_steps must be >= 1".into()));
        }
        if self.x0.len() != dim {
            return Err(Error::Config(format!("x0 has dimension {}, potentials have {dim}", self.x0.len())));
        }
        ensure_finite("x0", &self.x0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let ok = SimConfig::new(0.5, 0.01, 1.0, vec![0.0], 1);
        assert!(ok.validate(1).is_ok());
        assert!(ok.validate(2).is_err());
        let mut bad = ok.clone();
        bad.dt = 2.0;
        assert!(bad.validate(1).is_err());
        let mut bad = ok.clone();
        bad.decimation_stride = 0;
        assert!(bad.validate(1).is_err());
        let mut bad = ok.clone();
        bad.sigma = -1.0;
        assert!(bad.validate(1).is_err());
        let mut bad = ok;
        bad.x0 = vec![f64::NAN];
        assert!(bad.validate(1).is_err());
    }

    #[test]
    fn auto_stride_caps_buffer() {
        let c = SimConfig::new(0.5, 1e-3, 7161.0, vec![0.0], 1).with_auto_stride();
        assert_eq!(c.decimation_stride, 72);
        assert!(c.n_steps() as usize / c.decimation_stride <= MAX_BUFFER_LEN);
        let c = SimConfig::new(0.5, 1e-3, 10.0, vec![0.0], 1).with_auto_stride();
        assert_eq!(c.decimation_stride, 1);
    }
}
