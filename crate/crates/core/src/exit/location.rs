use serde::Serialize;

use super::kramers::inversions;
use super::{exit_cost, Domain, ExitRecord};
use crate::error::{Error, Result};
use crate::potentials::norm;

/// Half-angle of the cone around a cost minimizer that counts as "near" it.
pub const NEAR_ANGLE_DEG: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocationRow {
    pub sigma: f64,
    /// Exits counted (timed-out and degenerate records are dropped).
    pub exits: usize,
    /// Fraction of exits with boundary cost `≥ H + margin`.
    pub frac_in_n: f64,
    /// Fraction of exits within [`NEAR_ANGLE_DEG`] of a boundary cost
    /// minimizer, seen from `m`. NaN when the minimizers are not isolated.
    pub near_minimizer_fraction: f64,
    /// `(lower edge, upper edge, count)` of the boundary cost at exit.
    pub histogram: Vec<(f64, f64, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocationReport {
    pub h: f64,
    pub margin: f64,
    pub rows: Vec<LocationRow>,
    /// `frac_in_n` is non-increasing along the rows.
    pub trend_ok: bool,
}

/// Where the exits of a sweep land. `rows` pairs each σ (in decreasing order)
/// with its records; the set `𝒩` is `{z ∈ ∂D : W_m(z) − V(m) ≥ H + margin}`.
pub fn exit_location_stats(
    rows: &[(f64, &[ExitRecord])],
    domain: &Domain,
    margin: f64,
    bins: usize,
) -> Result<LocationReport> {
    if rows.is_empty() || rows.iter().all(|(_, r)| r.is_empty()) {
        return Err(Error::Usage("no exit records".into()));
    }
    if bins == 0 {
        return Err(Error::Usage("need at least one histogram bin".into()));
    }
    if margin.is_nan() || margin < 0.0 {
        return Err(Error::Usage(format!("margin must be >= 0, got {margin}")));
    }
    let cost = exit_cost(domain)?;
    let h = cost.h;
    let eff = domain.effective();
    let m = domain.m();
    let dirs: Vec<Vec<f64>> = cost
        .minimizers
        .iter()
        .map(|x| {
            let z: Vec<f64> = x.iter().zip(m).map(|(a, b)| a - b).collect();
            let r = norm(&z);
            z.iter().map(|c| c / r).collect()
        })
        .collect();
    let cos_cut = NEAR_ANGLE_DEG.to_radians().cos();

    let costs: Vec<Vec<(f64, bool)>> = rows
        .iter()
        .map(|(_, recs)| {
            recs.iter()
                .filter(|r| !r.timed_out && !r.degenerate_start)
                .map(|r| {
                    let z: Vec<f64> = r.exit_point.iter().zip(m).map(|(a, b)| a - b).collect();
                    let zn = norm(&z);
                    let near = dirs
                        .iter()
                        .any(|u| zn > 0.0 && z.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / zn >= cos_cut);
                    (eff.value(&r.exit_point), near)
                })
                .collect()
        })
        .collect();
    let top = costs.iter().flatten().map(|c| c.0).fold(h, f64::max);
    let width = ((top - h) / bins as f64).max(1e-12);

    let out: Vec<LocationRow> = rows
        .iter()
        .zip(&costs)
        .map(|((sigma, _), cs)| {
            let n = cs.len();
            let mut hist: Vec<(f64, f64, usize)> =
                (0..bins).map(|b| (h + b as f64 * width, h + (b + 1) as f64 * width, 0)).collect();
            for (c, _) in cs {
                let b = (((c - h) / width).floor().max(0.0) as usize).min(bins - 1);
                hist[b].2 += 1;
            }
            let in_n = cs.iter().filter(|(c, _)| *c >= h + margin).count();
            let near = cs.iter().filter(|(_, nr)| *nr).count();
            let frac = |k: usize| if n == 0 { f64::NAN } else { k as f64 / n as f64 };
            LocationRow {
                sigma: *sigma,
                exits: n,
                frac_in_n: frac(in_n),
                near_minimizer_fraction: if dirs.is_empty() { f64::NAN } else { frac(near) },
                histogram: hist,
            }
        })
        .collect();
    let fracs: Vec<f64> = out.iter().map(|r| r.frac_in_n).filter(|f| !f.is_nan()).collect();
    Ok(LocationReport {
        h,
        margin,
        trend_ok: inversions(&fracs) == 0,
        rows: out,
    })
}
