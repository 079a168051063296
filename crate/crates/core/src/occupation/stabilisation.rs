use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::potentials::PotentialSpec;
use crate::sde::{simulate_self_interacting, SimConfig};

/// Replica statistics of `W₂ₖ(μ_t, δ_m)` on a checkpoint grid.
#[derive(Debug, Clone, Serialize)]
pub struct StabilisationCurve {
    pub sigma: f64,
    pub k: u32,
    pub replicas: usize,
    pub checkpoints: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub q10: Vec<f64>,
    pub median: Vec<f64>,
    pub q90: Vec<f64>,
    /// `per_replica[r][c]`: distance of replica `r` at checkpoint `c`.
    #[serde(skip)]
    pub per_replica: Vec<Vec<f64>>,
}

/// Estimated stabilisation time for one `κ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilisationEstimate {
    pub kappa: f64,
    pub sigma: f64,
    /// Earliest checkpoint from which every later checkpoint mean is `≤ κ`;
    /// `None` when the last checkpoint mean is still above `κ`.
    pub t_hat: Option<f64>,
    pub replica_count: usize,
    /// Mean and standard error at the last checkpoint.
    pub trailing_mean: f64,
    pub trailing_stderr: f64,
    /// `mean ± 1.96·stderr` at `t_hat` (at the last checkpoint when not stabilised).
    pub band: (f64, f64),
}

impl StabilisationCurve {
    pub fn estimate(&self, kappa: f64) -> StabilisationEstimate {
        let n = self.checkpoints.len();
        let mut first = n;
        while first > 0 && self.mean[first - 1] <= kappa {
            first -= 1;
        }
        let t_hat = (first < n).then(|| self.checkpoints[first]);
        let at = if first < n { first } else { n - 1 };
        StabilisationEstimate {
            kappa,
            sigma: self.sigma,
            t_hat,
            replica_count: self.replicas,
            trailing_mean: self.mean[n - 1],
            trailing_stderr: self.stderr[n - 1],
            band: (self.mean[at] - 1.96 * self.stderr[at], self.mean[at] + 1.96 * self.stderr[at]),
        }
    }

    /// Counts consecutive checkpoints at or after `t0` where the mean rises
    /// by more than the larger of the two standard errors.
    pub fn stderr_inversions(&self, t0: f64) -> usize {
        (1..self.checkpoints.len())
            .filter(|&c| self.checkpoints[c - 1] >= t0)
            .filter(|&c| self.mean[c] - self.mean[c - 1] > self.stderr[c].max(self.stderr[c - 1]))
            .count()
    }

    /// Counts consecutive checkpoints at or after `t0` where the mean rises at all.
    pub fn raw_inversions(&self, t0: f64) -> usize {
        (1..self.checkpoints.len())
            .filter(|&c| self.checkpoints[c - 1] >= t0 && self.mean[c] > self.mean[c - 1])
            .count()
    }
}

/// Minimum replica count accepted by the estimator.
pub const MIN_REPLICAS: usize = 30;

/// Runs `replicas` independent paths to the last checkpoint and records the
/// exact `W₂ₖ(μ_t, δ_m)` at every checkpoint, `m` being the minimizer of `V`
/// and `2k` the larger growth degree of `V` and `W`.
///
/// `config.t_end` is ignored; paths end at the last checkpoint.
pub fn stabilisation_curve(
    v: &PotentialSpec,
    w: &PotentialSpec,
    config: &SimConfig,
    replicas: usize,
    checkpoints: &[f64],
) -> Result<StabilisationCurve> {
    if replicas < MIN_REPLICAS {
        return Err(Error::Config(format!("need at least {MIN_REPLICAS} replicas, got {replicas}")));
    }
    if checkpoints.is_empty() || checkpoints.windows(2).any(|c| c[0] >= c[1]) || checkpoints[0] <= 0.0 {
        return Err(Error::Config("checkpoints must be positive and strictly increasing".into()));
    }
    let mut cfg = config.clone();
    cfg.t_end = *checkpoints.last().unwrap();
    cfg.validate(v.dim())?;
    let m = v.minimizer();
    let k = v.growth_k().max(w.growth_k());
    let steps: Vec<u64> = checkpoints.iter().map(|c| (c / cfg.dt).round().max(1.0) as u64).collect();

    let per_replica: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut out = Vec::with_capacity(steps.len());
            let mut next = 0;
            simulate_self_interacting(v, w, &cfg, r, |s| {
                while next < steps.len() && s.step == steps[next] {
                    out.push(s.buffer.w2k_to_point(&m, k));
                    next += 1;
                }
                next == steps.len()
            })?;
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let nc = checkpoints.len();
    let mut mean = vec![0.0; nc];
    let mut stderr = vec![0.0; nc];
    let (mut q10, mut median, mut q90) = (vec![0.0; nc], vec![0.0; nc], vec![0.0; nc]);
    let nr = replicas as f64;
    for c in 0..nc {
        let mut col: Vec<f64> = per_replica.iter().map(|row| row[c]).collect();
        let mu = col.iter().sum::<f64>() / nr;
        let var = col.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (nr - 1.0);
        mean[c] = mu;
        stderr[c] = (var / nr).sqrt();
        col.sort_by(f64::total_cmp);
        q10[c] = quantile(&col, 0.1);
        median[c] = quantile(&col, 0.5);
        q90[c] = quantile(&col, 0.9);
    }
    Ok(StabilisationCurve {
        sigma: cfg.sigma,
        k,
        replicas,
        checkpoints: checkpoints.to_vec(),
        mean,
        stderr,
        q10,
        median,
        q90,
        per_replica,
    })
}

/// [`stabilisation_curve`] followed by [`StabilisationCurve::estimate`].
pub fn estimate_stabilisation_time(
    v: &PotentialSpec,
    w: &PotentialSpec,
    config: &SimConfig,
    kappa: f64,
    replicas: usize,
    checkpoints: &[f64],
) -> Result<StabilisationEstimate> {
    if !(kappa >= 0.0) {
        return Err(Error::Config(format!("kappa must be >= 0, got {kappa}")));
    }
    Ok(stabilisation_curve(v, w, config, replicas, checkpoints)?.estimate(kappa))
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}
