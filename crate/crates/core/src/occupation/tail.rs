use serde::Serialize;

use super::OccupationMeasure;
use crate::error::{Error, Result};

/// Tail masses `μ(|y − m| > R)` on a radius grid and the least-squares fit of
/// `C·e^{−aR}` to them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailProfile {
    pub radii: Vec<f64>,
    pub tail_mass: Vec<f64>,
    pub c: f64,
    /// Fitted decay rate `a`.
    pub rate: f64,
    /// Coefficient of determination of the fit in log space.
    pub r_squared: f64,
    /// Number of radii with positive tail mass that entered the fit.
    pub fitted_points: usize,
    /// Set when fewer than two radii carry positive mass; the fit fields are then NaN.
    pub degenerate: bool,
}

pub fn tail_profile(mu: &OccupationMeasure, m: &[f64], radii: &[f64]) -> Result<TailProfile> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::Usage("radii must be positive and finite".into()));
    }
    if radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Usage("radii must be strictly increasing".into()));
    }
    if m.len() != mu.dim() {
        return Err(Error::Usage(format!("center has dimension {}, measure has {}", m.len(), mu.dim())));
    }
    let mut dist: Vec<(f64, f64)> = (0..mu.len())
        .map(|i| {
            let r2: f64 = mu.point(i).iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
            (r2.sqrt(), mu.weights()[i])
        })
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0));
    // suffix sums give the mass strictly beyond each radius
    let mut suffix = vec![0.0; dist.len() + 1];
    for i in (0..dist.len()).rev() {
        suffix[i] = suffix[i + 1] + dist[i].1;
    }
    let tail_mass: Vec<f64> = radii
        .iter()
        .map(|r| {
            let idx = dist.partition_point(|(d, _)| d <= r);
            (suffix[idx] / mu.total()).clamp(0.0, 1.0)
        })
        .collect();

    let (xs, ys): (Vec<f64>, Vec<f64>) =
        radii.iter().zip(&tail_mass).filter(|(_, t)| **t > 0.0).map(|(r, t)| (*r, t.ln())).unzip();
    let n = xs.len();
    if n < 2 {
        return Ok(TailProfile {
            radii: radii.to_vec(),
            tail_mass,
            c: f64::NAN,
            rate: f64::NAN,
            r_squared: f64::NAN,
            fitted_points: n,
            degenerate: true,
        });
    }
    let xm = xs.iter().sum::<f64>() / n as f64;
    let ym = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let syy: f64 = ys.iter().map(|y| (y - ym) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(TailProfile {
        radii: radii.to_vec(),
        tail_mass,
        c: intercept.exp(),
        rate: -slope,
        r_squared,
        fitted_points: n,
        degenerate: false,
    })
}
