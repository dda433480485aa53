//! Least angle regression with corrected leave-one-out model selection.

use super::basis::{eval_from_table, univariate_table, BasisKind, MultiIndex};

/// Basis matrix for a fixed experimental design. Column 0 is the constant.
pub(crate) struct Design {
    pub indices: Vec<MultiIndex>,
    /// Raw basis columns, each of length `n`.
    pub columns: Vec<Vec<f64>>,
    /// Centred, unit-norm copies used to order predictors; `None` for the
    /// constant and for columns with no spread.
    standardized: Vec<Option<Vec<f64>>>,
    pub n: usize,
}

impl Design {
    pub fn new(points: &[Vec<f64>], kinds: &[BasisKind], indices: Vec<MultiIndex>) -> Self {
        let n = points.len();
        let max_degree = indices
            .iter()
            .flat_map(|i| i.degrees().iter().copied())
            .max()
            .unwrap_or(0) as usize;
        let mut columns = vec![Vec::with_capacity(n); indices.len()];
        for u in points {
            let table = univariate_table(u, kinds, max_degree);
            for (col, idx) in columns.iter_mut().zip(&indices) {
                col.push(eval_from_table(idx, &table));
            }
        }
        let standardized = columns
            .iter()
            .zip(&indices)
            .map(|(col, idx)| {
                if idx.is_zero() {
                    return None;
                }
                let mean = col.iter().sum::<f64>() / n as f64;
                let centred: Vec<f64> = col.iter().map(|v| v - mean).collect();
                let norm = centred.iter().map(|v| v * v).sum::<f64>().sqrt();
                let scale = col.iter().map(|v| v.abs()).fold(0.0, f64::max);
                (norm > 1e-10 * scale * (n as f64).sqrt()).then(|| centred.iter().map(|v| v / norm).collect())
            })
            .collect();
        Design {
            indices,
            columns,
            standardized,
            n,
        }
    }

    /// True when some non-constant column carries no information.
    pub fn has_dead_column(&self) -> bool {
        self.standardized
            .iter()
            .zip(&self.indices)
            .any(|(s, i)| s.is_none() && !i.is_zero())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Order in which LAR activates the non-constant columns, stopping after
/// `max_steps` activations or once the residual is exhausted.
pub(crate) fn lar_order(design: &Design, y: &[f64], max_steps: usize) -> Vec<usize> {
    let n = design.n;
    let mean = y.iter().sum::<f64>() / n as f64;
    let mut r: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let r0 = dot(&r, &r).sqrt();
    let p = design.columns.len();
    let mut usable: Vec<bool> = design.standardized.iter().map(Option::is_some).collect();
    let col = |j: usize| design.standardized[j].as_deref().expect("usable column");

    let mut active: Vec<usize> = Vec::new();
    let mut signs: Vec<f64> = Vec::new();
    // Lower Cholesky factor of the signed Gram matrix of the active set.
    let mut chol: Vec<Vec<f64>> = Vec::new();
    let mut in_active = vec![false; p];

    while active.len() < max_steps {
        let c: Vec<f64> = (0..p).map(|j| if usable[j] { dot(col(j), &r) } else { 0.0 }).collect();
        let pick = (0..p)
            .filter(|&j| usable[j] && !in_active[j])
            .max_by(|&a, &b| c[a].abs().total_cmp(&c[b].abs()));
        let Some(j_new) = pick else { break };
        let big_c = c[j_new].abs();
        if big_c <= 1e-13 * r0.max(f64::MIN_POSITIVE) {
            break;
        }
        let s_new = c[j_new].signum();
        // Cholesky update: G = [G g; g^T 1].
        let g: Vec<f64> = active
            .iter()
            .zip(&signs)
            .map(|(&i, &s)| s * s_new * dot(col(i), col(j_new)))
            .collect();
        let l = forward_sub(&chol, &g);
        let d2 = 1.0 - dot(&l, &l);
        if d2 < 1e-10 {
            usable[j_new] = false;
            continue;
        }
        let mut row = l;
        row.push(d2.sqrt());
        chol.push(row);
        active.push(j_new);
        signs.push(s_new);
        in_active[j_new] = true;

        // Equiangular direction.
        let ones = vec![1.0; active.len()];
        let z = forward_sub(&chol, &ones);
        let w_raw = backward_sub_transpose(&chol, &z);
        let a_a = 1.0 / dot(&ones, &w_raw).sqrt();
        let mut u = vec![0.0; n];
        for ((&j, &s), &w) in active.iter().zip(&signs).zip(&w_raw) {
            let coef = a_a * w * s;
            for (ui, xi) in u.iter_mut().zip(col(j)) {
                *ui += coef * xi;
            }
        }
        let mut gamma = big_c / a_a;
        for j in 0..p {
            if !usable[j] || in_active[j] {
                continue;
            }
            let a_j = dot(col(j), &u);
            for (num, den) in [(big_c - c[j], a_a - a_j), (big_c + c[j], a_a + a_j)] {
                if den > 1e-14 {
                    let step = num / den;
                    if step > 1e-14 && step < gamma {
                        gamma = step;
                    }
                }
            }
        }
        for (ri, ui) in r.iter_mut().zip(&u) {
            *ri -= gamma * ui;
        }
    }
    active
}

fn forward_sub(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(b.len());
    for (i, row) in l.iter().enumerate() {
        let s: f64 = (0..i).map(|k| row[k] * x[k]).sum();
        x.push((b[i] - s) / row[i]);
    }
    x
}

/// Solves `L^T x = b`.
fn backward_sub_transpose(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let k = b.len();
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|m| l[m][i] * x[m]).sum();
        x[i] = (b[i] - s) / l[i][i];
    }
    x
}

/// Least-squares fit of one support.
#[derive(Debug, Clone)]
pub(crate) struct SupportFit {
    /// Column indices into the design, constant first.
    pub support: Vec<usize>,
    pub coefficients: Vec<f64>,
    /// Corrected leave-one-out error normalised by the output variance.
    pub loo: f64,
}

/// Walks the LAR order, refitting by least squares after each activation,
/// and returns the support with the smallest corrected LOO error. Among
/// candidates whose errors agree to rounding, the smallest support wins.
pub(crate) fn select_support(design: &Design, y: &[f64], order: &[usize], var_y: f64) -> Option<SupportFit> {
    let n = design.n;
    let nf = n as f64;
    let mut q: Vec<Vec<f64>> = Vec::new();
    // Columns of R^{-1}, upper triangular.
    let mut r_inv: Vec<Vec<f64>> = Vec::new();
    let mut qty: Vec<f64> = Vec::new();
    let mut support: Vec<usize> = Vec::new();
    // Centring first keeps rounding in the constant term out of the residuals.
    let y_mean = y.iter().sum::<f64>() / nf;
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let y = &yc[..];
    let mut hat = vec![0.0; n];
    let mut resid = y.to_vec();
    let mut trace = 0.0;
    let mut best: Option<(usize, f64)> = None;

    for &j in std::iter::once(&0usize).chain(order) {
        if support.len() + 2 > n {
            break;
        }
        let col = &design.columns[j];
        let col_norm = dot(col, col).sqrt();
        if col_norm == 0.0 {
            continue;
        }
        // Gram-Schmidt with one re-orthogonalisation pass.
        let mut v = col.clone();
        let mut rcol = vec![0.0; q.len()];
        for _ in 0..2 {
            for (k, qk) in q.iter().enumerate() {
                let proj = dot(qk, &v);
                rcol[k] += proj;
                for (vi, qi) in v.iter_mut().zip(qk) {
                    *vi -= proj * qi;
                }
            }
        }
        let rho = dot(&v, &v).sqrt();
        if rho <= 1e-10 * col_norm {
            continue;
        }
        for vi in v.iter_mut() {
            *vi /= rho;
        }
        // New column of R^{-1}: [-R^{-1} r / rho; 1 / rho].
        let k = q.len();
        let mut new_col = vec![0.0; k + 1];
        for (m, rc) in rcol.iter().enumerate() {
            for (i, val) in r_inv[m].iter().enumerate() {
                new_col[i] -= val * rc / rho;
            }
        }
        new_col[k] = 1.0 / rho;
        trace += dot(&new_col, &new_col);
        r_inv.push(new_col);

        let proj = dot(&v, &resid);
        qty.push(dot(&v, y));
        for ((ri, hi), vi) in resid.iter_mut().zip(hat.iter_mut()).zip(&v) {
            *ri -= proj * vi;
            *hi += vi * vi;
        }
        q.push(v);
        support.push(j);

        let size = support.len();
        let loo = if var_y == 0.0 {
            0.0
        } else if hat.iter().any(|h| 1.0 - h <= 1e-12) {
            f64::INFINITY
        } else {
            let raw = resid
                .iter()
                .zip(&hat)
                .map(|(r, h)| (r / (1.0 - h)).powi(2))
                .sum::<f64>()
                / nf;
            let correction = nf / (nf - size as f64) * (1.0 + trace);
            raw / var_y * correction
        };
        let better = match best {
            None => true,
            Some((_, b)) => loo < b - (1e-9 * b + 1e-14),
        };
        if better && loo.is_finite() {
            best = Some((size, loo));
        }
    }

    let (size, loo) = best?;
    // Coefficients of the leading `size` columns: R^{-1} (Q^T y).
    let mut coefficients = vec![0.0; size];
    for (m, col) in r_inv.iter().take(size).enumerate() {
        for (i, val) in col.iter().enumerate() {
            coefficients[i] += val * qty[m];
        }
    }
    coefficients[0] += y_mean;
    Some(SupportFit {
        support: support[..size].to_vec(),
        coefficients,
        loo,
    })
}
