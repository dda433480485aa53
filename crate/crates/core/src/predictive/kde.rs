//! Gaussian kernel density estimates on uniform grids.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

pub const KDE_GRID_POINTS: usize = 512;

/// Kernels further than this many bandwidths away are dropped; the neglected
/// mass is below 1e-17 relative.
const KERNEL_CUTOFF: f64 = 9.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub pdf: Vec<f64>,
    pub bandwidth: f64,
    /// Set when all samples coincide and the bandwidth was floored.
    pub degenerate: bool,
}

impl DensityEstimate {
    /// Quantile from the trapezoid CDF, linear within a grid cell.
    pub fn quantile(&self, q: f64) -> f64 {
        let cdf = cumulative_trapezoid(&self.grid, &self.pdf);
        let total = cdf[cdf.len() - 1];
        let target = q * total;
        let k = cdf.partition_point(|&c| c < target);
        if k == 0 {
            return self.grid[0];
        }
        if k >= cdf.len() {
            return self.grid[self.grid.len() - 1];
        }
        let (c0, c1) = (cdf[k - 1], cdf[k]);
        let frac = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
        self.grid[k - 1] + frac * (self.grid[k] - self.grid[k - 1])
    }
}

/// Silverman's rule `0.9 min(sd, IQR/1.34) n^(-1/5)`. Falls back to the sd
/// term when the IQR vanishes, and to `1e-9 |x|` (or `1e-9`) when every
/// sample is equal; the flag reports the latter.
pub fn silverman_bandwidth(sorted: &[f64]) -> (f64, bool) {
    let n = sorted.len();
    let floor = || {
        let scale = sorted[0].abs();
        (if scale > 0.0 { 1e-9 * scale } else { 1e-9 }, true)
    };
    if n < 2 || sorted[0] == sorted[n - 1] {
        return floor();
    }
    let nf = n as f64;
    let mean = sorted.iter().sum::<f64>() / nf;
    let sd = (sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * nf.powf(-0.2);
    if h > 0.0 {
        (h, false)
    } else {
        floor()
    }
}

/// Type-7 quantile of sorted data: position `(n - 1) q`, linear between order
/// statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted_copy(samples: &[f64]) -> Vec<f64> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Uniform grid of `n` points on `[a, b]`.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let step = (b - a) / (n - 1) as f64;
    (0..n).map(|i| if i == n - 1 { b } else { a + i as f64 * step }).collect()
}

/// Unnormalised Gaussian-kernel density of `sorted` samples at each grid point.
pub fn kernel_sum(sorted: &[f64], h: f64, grid: &[f64]) -> Vec<f64> {
    let norm = 1.0 / (sorted.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let reach = KERNEL_CUTOFF * h;
    grid.iter()
        .map(|&x| {
            let lo = sorted.partition_point(|&s| s < x - reach);
            let hi = sorted.partition_point(|&s| s <= x + reach);
            let sum: f64 = sorted[lo..hi]
                .iter()
                .map(|&s| {
                    let z = (x - s) / h;
                    (-0.5 * z * z).exp()
                })
                .sum();
            sum * norm
        })
        .collect()
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

fn cumulative_trapezoid(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..x.len() {
        acc += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
        out.push(acc);
    }
    out
}

/// Scales `pdf` so its trapezoid integral over `grid` is one.
pub fn renormalize(grid: &[f64], pdf: &mut [f64]) {
    let total = trapezoid(grid, pdf);
    if total > 0.0 {
        for v in pdf.iter_mut() {
            *v /= total;
        }
    }
}

/// Gaussian KDE on a 512-point grid spanning `[min - 4h, max + 4h]`.
pub fn kde_fit(samples: &[f64], bandwidth: Option<f64>) -> Result<DensityEstimate> {
    ensure!(!samples.is_empty(), "density estimate needs at least one sample");
    ensure!(samples.iter().all(|v| v.is_finite()), "samples must be finite");
    let sorted = sorted_copy(samples);
    let (h, degenerate) = match bandwidth {
        Some(h) => {
            ensure!(h > 0.0 && h.is_finite(), "bandwidth must be positive, got {h}");
            (h, false)
        }
        None => silverman_bandwidth(&sorted),
    };
    let grid = uniform_grid(sorted[0] - 4.0 * h, sorted[sorted.len() - 1] + 4.0 * h, KDE_GRID_POINTS);
    let mut pdf = kernel_sum(&sorted, h, &grid);
    renormalize(&grid, &mut pdf);
    Ok(DensityEstimate {
        grid,
        pdf,
        bandwidth: h,
        degenerate,
    })
}
