use serde::Serialize;

use crate::occupation::{weighted_central_moment, OccupationMeasure};

/// Decimated record of a path, realizing its occupation measure.
///
/// Every raw step contributes its position with weight `dt`. Raw steps are
/// grouped into blocks of `stride`; a block is stored as a single sample
/// located at the block's last position and carrying the block's total
/// weight. The last block may be open (fewer than `stride` steps); its sample
/// is then updated in place as steps arrive. With `stride = 1` the buffer is
/// the exact left-point Riemann sum of the path.
///
/// Independently of the decimation, the buffer keeps exact running sums of
/// `w`, `w·x` and `w·|x|²` over all raw steps.
#[derive(Debug, Clone, Serialize)]
pub struct OccupationBuffer {
    dim: usize,
    stride: usize,
    times: Vec<f64>,
    points: Vec<f64>,
    weights: Vec<f64>,
    open: usize,
    total_weight: f64,
    weighted_sum: Vec<f64>,
    weighted_sq: f64,
    block_lo: Vec<f64>,
    block_hi: Vec<f64>,
    max_block_extent: f64,
}

impl OccupationBuffer {
    pub fn new(dim: usize, stride: usize) -> Self {
        Self {
            dim,
            stride: stride.max(1),
            times: Vec::new(),
            points: Vec::new(),
            weights: Vec::new(),
            open: 0,
            total_weight: 0.0,
            weighted_sum: vec![0.0; dim],
            weighted_sq: 0.0,
            block_lo: vec![0.0; dim],
            block_hi: vec![0.0; dim],
            max_block_extent: 0.0,
        }
    }

    /// Appends the position `x` held at time `t` with weight `w`.
    pub fn push(&mut self, t: f64, x: &[f64], w: f64) {
        debug_assert_eq!(x.len(), self.dim);
        if self.open == 0 || self.open == self.stride {
            self.times.push(t);
            self.points.extend_from_slice(x);
            self.weights.push(w);
            self.open = 1;
            self.block_lo.copy_from_slice(x);
            self.block_hi.copy_from_slice(x);
        } else {
            let last = self.weights.len() - 1;
            self.times[last] = t;
            self.points[last * self.dim..(last + 1) * self.dim].copy_from_slice(x);
            self.weights[last] += w;
            self.open += 1;
            let mut ext = 0.0;
            for i in 0..self.dim {
                self.block_lo[i] = self.block_lo[i].min(x[i]);
                self.block_hi[i] = self.block_hi[i].max(x[i]);
                let e = self.block_hi[i] - self.block_lo[i];
                ext += e * e;
            }
            self.max_block_extent = self.max_block_extent.max(ext.sqrt());
        }
        self.total_weight += w;
        let mut sq = 0.0;
        for i in 0..self.dim {
            self.weighted_sum[i] += w * x[i];
            sq += x[i] * x[i];
        }
        self.weighted_sq += w * sq;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Flat `len × dim` sample positions.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// Largest coordinate-box diameter of any block; bounds how far a stored
    /// representative can be from the raw positions it replaces.
    pub fn max_block_extent(&self) -> f64 {
        self.max_block_extent
    }

    /// Exact weighted mean over all raw steps, `None` when empty.
    pub fn mean(&self) -> Option<Vec<f64>> {
        (self.total_weight > 0.0).then(|| self.weighted_sum.iter().map(|s| s / self.total_weight).collect())
    }

    #[inline]
    pub(crate) fn mean_into(&self, out: &mut [f64]) -> bool {
        if self.total_weight <= 0.0 {
            return false;
        }
        for (o, s) in out.iter_mut().zip(&self.weighted_sum) {
            *o = s / self.total_weight;
        }
        true
    }

    /// Exact `W₂(μ, δ_center)` from the running sums.
    pub fn w2_to_point(&self, center: &[f64]) -> f64 {
        if self.total_weight <= 0.0 {
            return 0.0;
        }
        let mut cross = 0.0;
        let mut c2 = 0.0;
        for i in 0..self.dim {
            cross += center[i] * self.weighted_sum[i];
            c2 += center[i] * center[i];
        }
        let second = (self.weighted_sq - 2.0 * cross) / self.total_weight + c2;
        second.max(0.0).sqrt()
    }

    /// `W₂ₖ(μ, δ_center)`. Exact for `k = 1`; for `k > 1` it uses the stored
    /// samples and therefore carries the decimation error.
    pub fn w2k_to_point(&self, center: &[f64], k: u32) -> f64 {
        if k <= 1 {
            return self.w2_to_point(center);
        }
        if self.is_empty() {
            return 0.0;
        }
        let order = 2 * k;
        let moment = weighted_central_moment(self.dim, &self.points, &self.weights, self.total_weight, center, order);
        moment.powf(1.0 / order as f64)
    }

    /// Snapshot of the stored samples as a measure.
    pub fn to_measure(&self) -> Option<OccupationMeasure> {
        OccupationMeasure::new(self.dim, self.points.clone(), self.weights.clone()).ok()
    }
}

/// Current time, position and path record of one simulated trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryState {
    pub t: f64,
    pub step: u64,
    pub x: Vec<f64>,
    pub buffer: OccupationBuffer,
}

impl TrajectoryState {
    pub fn new(x0: Vec<f64>, stride: usize) -> Self {
        let d = x0.len();
        Self {
            t: 0.0,
            step: 0,
            x: x0,
            buffer: OccupationBuffer::new(d, stride),
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stride_one_keeps_every_step() {
        let mut b = OccupationBuffer::new(1, 1);
        for i in 0..5 {
            b.push(i as f64 * 0.1, &[i as f64], 0.1);
        }
        assert_eq!(b.len(), 5);
        assert_eq!(b.points(), &[0.0, 1.0, 2.0, 3.0, 4.0]);
        assert!((b.total_weight() - 0.5).abs() < 1e-15);
        assert_eq!(b.max_block_extent(), 0.0);
    }

    #[test]
    fn decimation_aggregates_blocks() {
        let mut b = OccupationBuffer::new(2, 3);
        for i in 0..7 {
            b.push(i as f64, &[i as f64, -(i as f64)], 1.0);
        }
        // blocks {0,1,2}, {3,4,5}, open {6}
        assert_eq!(b.len(), 3);
        assert_eq!(b.times(), &[2.0, 5.0, 6.0]);
        assert_eq!(b.point(0), &[2.0, -2.0]);
        assert_eq!(b.point(1), &[5.0, -5.0]);
        assert_eq!(b.weights(), &[3.0, 3.0, 1.0]);
        assert_eq!(b.total_weight(), 7.0);
        assert_eq!(b.weights().iter().sum::<f64>(), b.total_weight());
        assert!((b.max_block_extent() - 8f64.sqrt()).abs() < 1e-15);
        // running mean is over raw steps, not representatives
        assert_eq!(b.mean().unwrap(), vec![3.0, -3.0]);
        assert!(b.times().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn running_w2_matches_sample_moment_at_stride_one() {
        let mut b = OccupationBuffer::new(2, 1);
        let pts = [[0.3, 1.0], [-0.7, 0.2], [1.5, -0.4], [0.0, 0.0]];
        for (i, p) in pts.iter().enumerate() {
            b.push(i as f64, p, 0.25 + i as f64);
        }
        let m = [0.1, -0.2];
        let direct = weighted_central_moment(2, b.points(), b.weights(), b.total_weight(), &m, 2).sqrt();
        assert!((b.w2_to_point(&m) - direct).abs() < 1e-14);
        let m4 = weighted_central_moment(2, b.points(), b.weights(), b.total_weight(), &m, 4).powf(0.25);
        assert!((b.w2k_to_point(&m, 2) - m4).abs() < 1e-14);
    }
}
