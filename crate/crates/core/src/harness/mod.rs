//! Experiment configs, validation and the run driver behind the CLI.
//!
//! A config is one TOML file. Top-level keys pick the experiment and the
//! seed; the potentials live in `[v]` and `[w]`; everything else belongs to
//! the chosen experiment:
//!
//! ```toml
//! experiment = "invariant_fixed_point"
//! master_seed = 7
//! sigma = 1.0
//!
//! [v]
//! kind = "quadratic"
//! center = [0.0]
//! curvature = [1.0]
//!
//! [w]
//! kind = "quadratic"
//! center = [0.0]
//! curvature = [1.0]
//!
//! [grid]
//! lo = -6.0
//! hi = 6.0
//! n = 2001
//! ```

mod output;
mod run;

pub use output::{fmt_f64, sha256_hex, Cell, Csv, OutputDir, Report};
pub use run::{run_experiment, with_workers, RunManifest, SeedGroup};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::density::FixedPointConfig;
use crate::error::{Error, Result};
use crate::exit::{estimated_steps, exit_cost, Domain, DomainSpec, DtPolicy, KramersConfig};
use crate::potentials::{PotentialKind, PotentialSpec, SampleGrid, MIN_GRID_RADIUS};
use crate::seed::derive_seed;

/// A potential as written in a config: the functional form plus optional
/// overrides of the declared constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialDecl {
    #[serde(flatten)]
    pub kind: PotentialKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth_degree: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convexity_lower_bound: Option<f64>,
}

impl PotentialDecl {
    pub fn build(&self) -> Result<PotentialSpec> {
        let mut spec = match &self.kind {
            PotentialKind::Quadratic { center, curvature } => PotentialSpec::quadratic_diag(center.clone(), curvature.clone())?,
            PotentialKind::EvenPoly { center, coeffs } => PotentialSpec::even_poly(center.clone(), coeffs.clone())?,
            PotentialKind::Radial { dim, profile } => PotentialSpec::radial(*dim, profile.clone())?,
            PotentialKind::Zero { dim } => PotentialSpec::zero(*dim)?,
        };
        if let Some(g) = self.growth_degree {
            if g < 2 || g % 2 != 0 {
                return Err(Error::Config(format!("growth_degree must be an even integer >= 2, got {g}")));
            }
            spec = spec.with_growth_degree(g);
        }
        if let Some(c) = self.convexity_lower_bound {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("convexity_lower_bound must be >= 0, got {c}")));
            }
            spec = spec.with_declared_convexity(c);
        }
        Ok(spec)
    }

    /// The declaration with every constant spelled out.
    pub fn resolved(&self) -> Result<Self> {
        let spec = self.build()?;
        Ok(Self {
            kind: self.kind.clone(),
            growth_degree: Some(spec.growth_degree),
            convexity_lower_bound: Some(spec.convexity_lower_bound),
        })
    }
}

impl From<&PotentialSpec> for PotentialDecl {
    fn from(spec: &PotentialSpec) -> Self {
        Self {
            kind: spec.kind.clone(),
            growth_degree: Some(spec.growth_degree),
            convexity_lower_bound: Some(spec.convexity_lower_bound),
        }
    }
}

fn default_budget() -> f64 {
    1e10
}

/// One experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    /// Where outputs go when the CLI is not given `--out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Cap on the estimated total number of Euler steps.
    #[serde(default = "default_budget")]
    pub step_budget: f64,
    pub v: PotentialDecl,
    pub w: PotentialDecl,
    #[serde(flatten)]
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum Experiment {
    ValidateAssumptions(ValidateParams),
    FlowCheck(FlowCheckParams),
    InvariantFixedPoint(FixedPointConfig),
    Stabilisation(StabilisationParams),
    CouplingGap(CouplingParams),
    Kramers(SweepParams),
    ExitLocation(LocationParams),
}

impl Experiment {
    pub fn tag(&self) -> &'static str {
        match self {
            Experiment::ValidateAssumptions(_) => "validate_assumptions",
            Experiment::FlowCheck(_) => "flow_check",
            Experiment::InvariantFixedPoint(_) => "invariant_fixed_point",
            Experiment::Stabilisation(_) => "stabilisation",
            Experiment::CouplingGap(_) => "coupling_gap",
            Experiment::Kramers(_) => "kramers",
            Experiment::ExitLocation(_) => "exit_location",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateParams {
    #[serde(default = "default_grid_radius")]
    pub grid_radius: f64,
    #[serde(default = "default_n_radii")]
    pub n_radii: usize,
    #[serde(default = "default_n_directions")]
    pub n_directions: usize,
}

fn default_grid_radius() -> f64 {
    MIN_GRID_RADIUS
}

fn default_n_radii() -> usize {
    41
}

fn default_n_directions() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowCheckParams {
    /// Start of the self-interacting flow.
    pub x0: Vec<f64>,
    /// Start of the frozen flow; `x0` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen_x0: Option<Vec<f64>>,
    pub t_end: f64,
    #[serde(default = "default_flow_dt")]
    pub dt: f64,
    #[serde(default = "default_flow_tol")]
    pub tol: f64,
    #[serde(default = "default_halvings")]
    pub max_halvings: usize,
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
}

fn default_flow_dt() -> f64 {
    1e-3
}

fn default_flow_tol() -> f64 {
    1e-6
}

fn default_halvings() -> usize {
    3
}

fn default_warmup() -> usize {
    10
}

/// A checkpoint grid: an explicit list, or `every, 2·every, …, t_end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
}

impl CheckpointSpec {
    pub fn resolve(&self) -> Result<Vec<f64>> {
        let list = match (&self.checkpoints, self.checkpoint_every, self.t_end) {
            (Some(list), None, None) => list.clone(),
            (None, Some(every), Some(t_end)) => {
                if !(every > 0.0 && t_end >= every && (t_end / every) <= 1e6) {
                    return Err(Error::Config(format!(
                        "need 0 < checkpoint_every <= t_end with at most 1e6 checkpoints, got {every} and {t_end}"
                    )));
                }
                let n = (t_end / every).round() as usize;
                (1..=n).map(|i| i as f64 * every).collect()
            }
            _ => {
                return Err(Error::Config(
                    "give either `checkpoints` or both `checkpoint_every` and `t_end`".into(),
                ))
            }
        };
        if list.is_empty() || list[0] <= 0.0 || list.windows(2).any(|c| c[0] >= c[1]) {
            return Err(Error::Config("checkpoints must be positive and strictly increasing".into()));
        }
        Ok(list)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilisationParams {
    pub sigmas: Vec<f64>,
    pub kappa: f64,
    pub replicas: usize,
    pub dt: f64,
    /// Start point; the minimizer of `V` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
    /// Monotonicity of the mean curve is judged from this time on.
    #[serde(default = "default_monotone_from")]
    pub monotone_from: f64,
    #[serde(flatten)]
    pub checkpoints: CheckpointSpec,
}

fn default_monotone_from() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub sigmas: Vec<f64>,
    pub kappa: f64,
    pub replicas: usize,
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
    /// The coupled runs last `horizon_factor · t_hat(σ)`.
    #[serde(default = "default_horizon_factor")]
    pub horizon_factor: f64,
    /// Target number of gap samples per replica.
    #[serde(default = "default_record_points")]
    pub record_points: usize,
    /// Replicas whose X and Y paths are written out.
    #[serde(default = "default_dump_replicas")]
    pub dump_replicas: usize,
    /// Required fraction of replicas satisfying the pathwise bound.
    #[serde(default = "default_bound_fraction")]
    pub bound_fraction: f64,
    #[serde(flatten)]
    pub checkpoints: CheckpointSpec,
}

fn default_horizon_factor() -> f64 {
    10.0
}

fn default_record_points() -> usize {
    500
}

fn default_dump_replicas() -> usize {
    2
}

fn default_bound_fraction() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepParams {
    pub domain: DomainSpec,
    pub sigmas: Vec<f64>,
    pub replicas: usize,
    pub delta: f64,
    #[serde(default)]
    pub dt_policy: DtPolicy,
    #[serde(default = "default_t_max_factor")]
    pub t_max_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
    #[serde(default = "default_flow_horizon")]
    pub flow_horizon: f64,
    #[serde(default = "default_boundary_samples")]
    pub boundary_samples: usize,
}

fn default_t_max_factor() -> f64 {
    3.0
}

fn default_flow_horizon() -> f64 {
    20.0
}

fn default_boundary_samples() -> usize {
    16
}

impl SweepParams {
    pub fn kramers_config(&self, master_seed: u64, step_budget: f64) -> KramersConfig {
        KramersConfig {
            sigmas: self.sigmas.clone(),
            replicas: self.replicas,
            delta: self.delta,
            dt_policy: self.dt_policy,
            t_max_factor: self.t_max_factor,
            master_seed,
            x0: self.x0.clone(),
            step_budget,
            warmup_steps: self.warmup_steps,
            flow_horizon: self.flow_horizon,
            boundary_samples: self.boundary_samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationParams {
    #[serde(flatten)]
    pub sweep: SweepParams,
    /// `𝒩` holds the boundary points of cost at least `H + margin`.
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Required fraction of exits near a cost minimizer at the smallest σ.
    #[serde(default = "default_near_fraction")]
    pub near_fraction: f64,
}

fn default_margin() -> f64 {
    0.5
}

fn default_bins() -> usize {
    10
}

fn default_near_fraction() -> f64 {
    0.9
}

/// Output of [`validate_config`].
#[derive(Debug, Clone)]
pub struct ValidatedConfig {
    pub config: ExperimentConfig,
    pub v: PotentialSpec,
    pub w: PotentialSpec,
    /// Worst-case Euler steps of the run.
    pub estimated_steps: f64,
    /// Seed every stream of the run is derived from.
    pub experiment_seed: u64,
}

impl ExperimentConfig {
    /// Parses TOML text, rejecting keys the schema does not know.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        let config: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let echo: toml::Table = toml::Table::try_from(&config).map_err(|e| Error::Parse(e.to_string()))?;
        let mut unknown = Vec::new();
        unknown_keys(&raw, &echo, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(Error::Parse(format!("unknown keys: {}", unknown.join(", "))));
        }
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// The config with every default and declared constant written out.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        c.v = self.v.resolved()?;
        c.w = self.w.resolved()?;
        Ok(c)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

fn unknown_keys(raw: &toml::Table, echo: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in raw {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (v, echo.get(k)) {
            (_, None) => out.push(path),
            (toml::Value::Table(a), Some(toml::Value::Table(b))) => unknown_keys(a, b, &path, out),
            _ => {}
        }
    }
}

fn check_sigmas(sigmas: &[f64]) -> Result<()> {
    if sigmas.is_empty() || sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::Config("sigmas must be a non-empty list of positive numbers".into()));
    }
    if sigmas.windows(2).any(|s| s[0] <= s[1]) {
        return Err(Error::Config(format!("sigmas must be strictly decreasing, got {sigmas:?}")));
    }
    Ok(())
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    Ok(())
}

fn check_start(x0: &Option<Vec<f64>>, dim: usize) -> Result<()> {
    match x0 {
        Some(x) if x.len() != dim => Err(Error::Config(format!("x0 has dimension {}, potentials have {dim}", x.len()))),
        Some(x) if x.iter().any(|c| !c.is_finite()) => Err(Error::Config("x0 must be finite".into())),
        _ => Ok(()),
    }
}

/// Checks the schema-level constraints and the step budget without running anything.
pub fn validate_config(config: &ExperimentConfig) -> Result<ValidatedConfig> {
    let v = config.v.build()?;
    let w = config.w.build()?;
    w.ensure_interaction()?;
    if v.dim() != w.dim() {
        return Err(Error::Config(format!("V has dimension {}, W has {}", v.dim(), w.dim())));
    }
    if !(config.step_budget > 0.0) {
        return Err(Error::Config("step_budget must be positive".into()));
    }
    let d = v.dim();
    let estimated = match &config.experiment {
        Experiment::ValidateAssumptions(p) => {
            if !(p.grid_radius >= MIN_GRID_RADIUS) || p.n_radii < 2 || p.n_directions == 0 {
                return Err(Error::Config(format!(
                    "validation grid needs radius >= {MIN_GRID_RADIUS}, at least 2 radii and 1 direction"
                )));
            }
            SampleGrid::rays(v.minimizer(), p.grid_radius, p.n_radii, p.n_directions);
            0.0
        }
        Experiment::FlowCheck(p) => {
            check_start(&Some(p.x0.clone()), d)?;
            check_start(&p.frozen_x0, d)?;
            check_dt(p.dt)?;
            if !(p.t_end > p.dt && p.t_end.is_finite()) {
                return Err(Error::Config("flow needs t_end > dt".into()));
            }
            // two flows, each refined up to max_halvings times
            2.0 * (p.t_end / p.dt) * 2f64.powi(p.max_halvings as i32 + 1)
        }
        Experiment::InvariantFixedPoint(p) => {
            p.validate()?;
            if d != 1 {
                return Err(Error::Config("the fixed-point solver is one-dimensional".into()));
            }
            0.0
        }
        Experiment::Stabilisation(p) => {
            check_sigmas(&p.sigmas)?;
            check_dt(p.dt)?;
            check_start(&p.x0, d)?;
            if !(p.kappa >= 0.0) {
                return Err(Error::Config("kappa must be >= 0".into()));
            }
            let cps = p.checkpoints.resolve()?;
            p.sigmas.len() as f64 * p.replicas as f64 * (cps.last().unwrap() / p.dt).ceil()
        }
        Experiment::CouplingGap(p) => {
            check_sigmas(&p.sigmas)?;
            check_dt(p.dt)?;
            check_start(&p.x0, d)?;
            if !(p.kappa > 0.0) {
                return Err(Error::Config("kappa must be positive".into()));
            }
            if !(p.horizon_factor >= 1.0 && p.horizon_factor.is_finite()) {
                return Err(Error::Config("horizon_factor must be >= 1".into()));
            }
            if p.record_points == 0 || !(0.0..=1.0).contains(&p.bound_fraction) {
                return Err(Error::Config("record_points must be positive and bound_fraction in [0, 1]".into()));
            }
            let cps = p.checkpoints.resolve()?;
            let last = cps.last().unwrap();
            p.sigmas.len() as f64 * p.replicas as f64 * ((last / p.dt).ceil() * (1.0 + p.horizon_factor))
        }
        Experiment::Kramers(p) => sweep_budget(&v, &w, p, config)?,
        Experiment::ExitLocation(p) => {
            if p.bins == 0 || !(p.margin >= 0.0) || !(0.0..=1.0).contains(&p.near_fraction) {
                return Err(Error::Config("need bins >= 1, margin >= 0 and near_fraction in [0, 1]".into()));
            }
            sweep_budget(&v, &w, &p.sweep, config)?
        }
    };
    if estimated > config.step_budget {
        return Err(Error::Budget {
            estimated,
            cap: config.step_budget,
        });
    }
    Ok(ValidatedConfig {
        experiment_seed: derive_seed(config.master_seed, config.experiment.tag(), 0),
        config: config.resolved()?,
        v,
        w,
        estimated_steps: estimated,
    })
}

fn sweep_budget(v: &PotentialSpec, w: &PotentialSpec, p: &SweepParams, config: &ExperimentConfig) -> Result<f64> {
    let kc = p.kramers_config(0, config.step_budget);
    kc.validate()?;
    let m = v.minimizer();
    check_start(&p.x0, m.len())?;
    let domain = Domain::new(p.domain.clone(), v, w, &m)?;
    let h = exit_cost(&domain)?.h;
    Ok(estimated_steps(h, &kc))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXED: &str = r#"
experiment = "invariant_fixed_point"
master_seed = 7
sigma = 1.0

[v]
kind = "quadratic"
center = [0.0]
curvature = [1.0]

[w]
kind = "quadratic"
center = [0.0]
curvature = [1]

[grid]
lo = -6.0
hi = 6.0
n = 2001
"#;

    #[test]
    fn parses_and_resolves() {
        let c = ExperimentConfig::from_toml_str(FIXED).unwrap();
        assert_eq!(c.experiment.tag(), "invariant_fixed_point");
        let r = c.resolved().unwrap();
        assert_eq!(r.v.convexity_lower_bound, Some(1.0));
        let text = r.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, r);
        let val = validate_config(&c).unwrap();
        assert_eq!(val.estimated_steps, 0.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = FIXED.replace("sigma = 1.0", "sigma = 1.0\nsigmma = 2.0");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("sigmma"), "{err}");
        let text = FIXED.replace("n = 2001", "n = 2001\nstep = 0.1");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn decimal_numbers_keep_full_precision() {
        let text = FIXED.replace("sigma = 1.0", "sigma = 0.30000000000000004");
        let c = ExperimentConfig::from_toml_str(&text).unwrap();
        match c.experiment {
            Experiment::InvariantFixedPoint(p) => assert_eq!(p.sigma, 0.1 + 0.2),
            _ => unreachable!(),
        }
    }

    #[test]
    fn kramers_budget_is_checked_up_front() {
        let text = r#"
experiment = "kramers"
master_seed = 1
step_budget = 1e6
sigmas = [0.9, 0.8]
replicas = 100
delta = 0.4

[domain]
shape = "interval"
lo = -1.0
hi = 1.0

[v]
kind = "quadratic"
center = [0.0]
curvature = [1.0]

[w]
kind = "quadratic"
center = [0.0]
curvature = [1.0]
"#;
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        assert!(matches!(validate_config(&c), Err(Error::Budget { .. })));
    }

    #[test]
    fn checkpoint_grid() {
        let spec = CheckpointSpec {
            checkpoints: None,
            checkpoint_every: Some(0.5),
            t_end: Some(2.0),
        };
        assert_eq!(spec.resolve().unwrap(), vec![0.5, 1.0, 1.5, 2.0]);
        let bad = CheckpointSpec {
            checkpoints: Some(vec![1.0]),
            checkpoint_every: Some(0.5),
            t_end: None,
        };
        assert!(bad.resolve().is_err());
    }

    #[test]
    fn interaction_must_be_centred() {
        let text = FIXED.replacen("center = [0.0]\ncurvature = [1]", "center = [1.0]\ncurvature = [1]", 1);
        let c = ExperimentConfig::from_toml_str(&text).unwrap();
        assert!(validate_config(&c).is_err());
    }
}
