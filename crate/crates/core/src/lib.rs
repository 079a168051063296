//! Simulation and diagnostics for self-interacting diffusions
//!
//! ```text
//! dX_t = σ dB_t − ( ∇V(X_t) + (1/t) ∫₀ᵗ ∇W(X_t − X_s) ds ) dt
//! ```
//!
//! where `V` confines the process and `W` pulls it back towards its own past.
//!
//! * [`potentials`]: the convex families for `V` and `W` and their checks.
//! * [`sde`]: Euler–Maruyama integrators for `X`, the frozen diffusion, the
//!   coupled pair and the zero-noise flows.
//! * [`occupation`]: weighted empirical measures, Wasserstein distances and
//!   stabilisation curves.
//! * [`density`]: the Gibbs map and its fixed point on a 1-D grid.
//! * [`exit`]: domains, exit costs and σ-sweeps of first exit times.
//! * [`harness`]: TOML experiment files and reproducible runs.
//!
//! Every random stream is derived from a master seed with [`derive_seed`], so
//! a run is reproducible bit for bit whatever the number of worker threads.
//!
//! ```
//! use sidlab::potentials::PotentialSpec;
//! use sidlab::sde::{simulate_self_interacting, SimConfig};
//!
//! let v = PotentialSpec::quadratic(vec![0.0], 1.0)?;
//! let w = PotentialSpec::quadratic(vec![0.0], 1.0)?;
//! let cfg = SimConfig::new(0.5, 1e-2, 5.0, vec![1.0], 42);
//! let path = simulate_self_interacting(&v, &w, &cfg, 0, |_| false)?;
//! assert_eq!(path.steps, 500);
//! # Ok::<(), sidlab::Error>(())
//! ```

pub mod density;
pub mod error;
pub mod exit;
pub mod harness;
pub mod occupation;
pub mod potentials;
pub mod sde;
pub mod seed;

pub use error::{Error, Result};
pub use seed::{derive_seed, replica_rng};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/potentials.md")]
    mod potentials {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/occupation.md")]
    mod occupation {}
    #[doc = include_str!("../../../book/src/invariant-density.md")]
    mod invariant_density {}
    #[doc = include_str!("../../../book/src/exits.md")]
    mod exits {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
