//! Mean forward / backward derivatives estimated from an ensemble by
//! conditioning on the time-`t` position (equal-probability bins).

use super::Ensemble;
use crate::error::{Error, Result};
use crate::linalg::Point;
use crate::wavefunction::{residual_step, VelocityKind, Wavefunction, NEAR_NODE_LOG_RATIO};

pub const DEFAULT_BINS: usize = 20;
/// Fewest samples a bin may hold.
pub const MIN_BIN_COUNT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// `D f(t) = lim E[f(t+Δt) − f(t) | x(t)] / Δt`.
    Forward,
    /// `D* f(t) = lim E[f(t) − f(t−Δt) | x(t)] / Δt`.
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinEstimate {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Mean of the binned coordinate inside the bin.
    pub x_mean: f64,
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinnedEstimate {
    pub t: f64,
    pub delta: f64,
    pub direction: Direction,
    pub coord: usize,
    pub bins: Vec<BinEstimate>,
}

/// Groups `values` by equal-count bins of `keys`.
fn bin_means(keys: &[f64], values: &[f64], n_bins: usize) -> Result<Vec<BinEstimate>> {
    if n_bins == 0 {
        return Err(Error::invalid("bins", "must be at least 1"));
    }
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
    let n = keys.len();
    let mut out = Vec::with_capacity(n_bins);
    for bin in 0..n_bins {
        let (start, end) = (bin * n / n_bins, (bin + 1) * n / n_bins);
        let count = end - start;
        if count < MIN_BIN_COUNT {
            return Err(Error::UnderpopulatedBin { bin, count, required: MIN_BIN_COUNT });
        }
        let idx = &order[start..end];
        let c = count as f64;
        let x_mean = idx.iter().map(|&i| keys[i]).sum::<f64>() / c;
        let mean = idx.iter().map(|&i| values[i]).sum::<f64>() / c;
        let var = idx.iter().map(|&i| (values[i] - mean).powi(2)).sum::<f64>() / (c - 1.0);
        out.push(BinEstimate {
            lo: keys[idx[0]],
            hi: keys[idx[count - 1]],
            count,
            x_mean,
            estimate: mean,
            stderr: (var / c).sqrt(),
        });
    }
    Ok(out)
}

fn neighbour_time(t: f64, delta: f64, direction: Direction) -> f64 {
    match direction {
        Direction::Forward => t + delta,
        Direction::Backward => t - delta,
    }
}

/// Binned estimate of the mean forward (or backward) derivative of
/// coordinate `coord` at time `t`, using the recorded step `t ± delta`.
pub fn estimate_mean_derivative(ens: &Ensemble, t: f64, delta: f64, direction: Direction, coord: usize, n_bins: usize) -> Result<BinnedEstimate> {
    if !(delta > 0.0) {
        return Err(Error::invalid("delta", format!("must be positive, got {delta}")));
    }
    let now = ens.values_at(t, coord)?;
    let other = ens.values_at(neighbour_time(t, delta, direction), coord)?;
    let rates: Vec<f64> = now
        .iter()
        .zip(&other)
        .map(|(x, y)| match direction {
            Direction::Forward => (y - x) / delta,
            Direction::Backward => (x - y) / delta,
        })
        .collect();
    Ok(BinnedEstimate { t, delta, direction, coord, bins: bin_means(&now, &rates, n_bins)? })
}

/// Binned estimate of `D f` (forward) or `D* f` (backward) for a field
/// `f(t, x)` evaluated along the sample paths. With `f = b` (forward) or
/// `f = b*` (backward) this is the second-order mean derivative of the
/// position.
pub fn estimate_drift_derivative<F>(
    ens: &Ensemble,
    t: f64,
    delta: f64,
    direction: Direction,
    coord: usize,
    n_bins: usize,
    field: F,
) -> Result<BinnedEstimate>
where
    F: Fn(f64, &Point) -> f64,
{
    if !(delta > 0.0) {
        return Err(Error::invalid("delta", format!("must be positive, got {delta}")));
    }
    let t_other = neighbour_time(t, delta, direction);
    let now = ens.points_at(t)?;
    let other = ens.points_at(t_other)?;
    let keys: Vec<f64> = now.iter().map(|p| p[coord]).collect();
    let rates: Vec<f64> = now
        .iter()
        .zip(&other)
        .map(|(x, y)| {
            let (fx, fy) = (field(t, x), field(t_other, y));
            match direction {
                Direction::Forward => (fy - fx) / delta,
                Direction::Backward => (fx - fy) / delta,
            }
        })
        .collect();
    Ok(BinnedEstimate { t, delta, direction, coord, bins: bin_means(&keys, &rates, n_bins)? })
}

/// Exact generator applied to the drift: `[∂_t + b·∇ + ν∇²] b_i` (forward) or
/// `[∂_t + b*·∇ − ν∇²] b*_i` (backward), at `x` and `psi.time()`.
///
/// Spatial first derivatives come from the exact Hessian of `ln ψ`; the
/// Laplacian of the drift and the time derivative use central differences.
pub fn drift_generator(psi: &Wavefunction, x: &Point, direction: Direction, coord: usize) -> Result<f64> {
    let phys = *psi.physics();
    let kind = match direction {
        Direction::Forward => VelocityKind::ForwardDrift,
        Direction::Backward => VelocityKind::BackwardDrift,
    };
    let sign = match direction {
        Direction::Forward => 1.0,
        Direction::Backward => -1.0,
    };
    let dim = psi.dim();
    let k = phys.hbar() / phys.mass(coord);
    // ∂_j b_i from the Hessian of ln ψ.
    let jacobian_row = |w: &Wavefunction, p: &Point| -> Result<[f64; 2]> {
        let jet = w.local_jet(p);
        if w.branches().len() > 1 && jet.log_density_ratio < NEAR_NODE_LOG_RATIO {
            return Err(Error::NearNode { log_ratio: jet.log_density_ratio });
        }
        let mut row = [0.0; 2];
        for (j, r) in row.iter_mut().enumerate().take(dim) {
            let h = jet.hess[(coord, j)];
            *r = k * (h.im + sign * h.re);
        }
        Ok(row)
    };
    let b = psi.drift_field(kind).eval(x)?;
    let row = jacobian_row(psi, x)?;
    let advect: f64 = (0..dim).map(|j| b[j] * row[j]).sum();

    let hx = 1e-4;
    let mut laplacian = 0.0;
    for j in 0..dim {
        let (mut xp, mut xm) = (*x, *x);
        xp[j] += hx;
        xm[j] -= hx;
        let d = (jacobian_row(psi, &xp)?[j] - jacobian_row(psi, &xm)?[j]) / (2.0 * hx);
        laplacian += phys.diffusion(j) * d;
    }

    let ht = residual_step(psi);
    let t = psi.time();
    let bp = psi.at_time(t + ht)?.drift_field(kind).eval(x)?[coord];
    let bm = psi.at_time(t - ht)?.drift_field(kind).eval(x)?[coord];
    let dbdt = (bp - bm) / (2.0 * ht);
    Ok(dbdt + advect + sign * laplacian)
}
