use serde::Serialize;

use super::Domain;
use crate::error::Result;
use crate::potentials::dist_sq;
use crate::sde::{BrownianSource, Diffusion};

/// First exit of one replica.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitRecord {
    pub replica: u64,
    /// Exit time, interpolated inside the crossing step. Equals the time
    /// reached when `timed_out` is set.
    pub tau: f64,
    /// Interpolated crossing point; the last position when `timed_out`.
    pub exit_point: Vec<f64>,
    pub timed_out: bool,
    pub steps: u64,
    /// The process started outside the domain, so `tau = 0`.
    pub degenerate_start: bool,
    /// Length of the step that crossed the boundary.
    pub crossing_step: f64,
}

/// Steps `process` with increments from `noise` until it leaves `domain` or
/// its time reaches `t_max`.
pub fn first_exit<D: Diffusion>(
    process: &mut D,
    noise: &mut BrownianSource,
    domain: &Domain,
    t_max: f64,
    replica: u64,
) -> Result<ExitRecord> {
    let d = process.dim();
    if !domain.contains(process.position()) {
        return Ok(ExitRecord {
            replica,
            tau: process.time(),
            exit_point: process.position().to_vec(),
            timed_out: false,
            steps: process.step_count(),
            degenerate_start: true,
            crossing_step: 0.0,
        });
    }
    let mut db = vec![0.0; d];
    let mut prev = process.position().to_vec();
    let mut t_prev = process.time();
    while process.time() < t_max {
        noise.fill(&mut db);
        process.advance(&db)?;
        let next = process.position();
        if !domain.contains(next) {
            let theta = domain.crossing(&prev, next);
            let exit_point: Vec<f64> = prev.iter().zip(next).map(|(a, b)| a + theta * (b - a)).collect();
            let tau = t_prev + theta * (process.time() - t_prev);
            return Ok(ExitRecord {
                replica,
                tau,
                exit_point,
                timed_out: false,
                steps: process.step_count(),
                degenerate_start: false,
                crossing_step: dist_sq(&prev, next).sqrt(),
            });
        }
        prev.copy_from_slice(next);
        t_prev = process.time();
    }
    Ok(ExitRecord {
        replica,
        tau: process.time(),
        exit_point: prev,
        timed_out: true,
        steps: process.step_count(),
        degenerate_start: false,
        crossing_step: 0.0,
    })
}
