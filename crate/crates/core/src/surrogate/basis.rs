//! Multi-indices and orthonormal Wiener-Askey polynomials.

use serde::{Deserialize, Serialize};

use crate::calibration::Marginal;

/// Polynomial degrees per input.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn degrees(&self) -> &[u32] {
        &self.0
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&d| d == 0)
    }

    fn q_norm(&self, q: f64) -> f64 {
        self.0.iter().map(|&d| (d as f64).powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

/// All multi-indices with `(sum eta_i^q)^(1/q) <= order`, in graded
/// lexicographic order (by total degree, then by descending leading degree).
pub fn hyperbolic_multi_indices(p: usize, order: u32, q: f64) -> Vec<MultiIndex> {
    assert!(p >= 1, "need at least one input");
    assert!(q > 0.0 && q <= 1.0, "q must lie in (0, 1]");
    let mut out = Vec::new();
    let mut current = vec![0u32; p];
    for total in 0..=order {
        compositions(total, 0, &mut current, &mut |eta| {
            let idx = MultiIndex(eta.to_vec());
            if idx.q_norm(q) <= order as f64 * (1.0 + 1e-12) {
                out.push(idx);
            }
        });
    }
    out
}

fn compositions(remaining: u32, pos: usize, current: &mut [u32], emit: &mut impl FnMut(&[u32])) {
    if pos == current.len() - 1 {
        current[pos] = remaining;
        emit(current);
        return;
    }
    for first in (0..=remaining).rev() {
        current[pos] = first;
        compositions(remaining - first, pos + 1, current, emit);
    }
    current[pos] = 0;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    /// Orthonormal for the uniform density on `[-1, 1]`.
    Legendre,
    /// Probabilists' Hermite scaled by `1/sqrt(n!)`.
    Hermite,
}

impl BasisKind {
    pub fn for_marginal(m: &Marginal) -> Self {
        match m {
            Marginal::Uniform { .. } => BasisKind::Legendre,
            Marginal::Normal { .. } => BasisKind::Hermite,
        }
    }

    /// Values of degrees `0..=max_degree` at `x`, written into `out`.
    pub fn eval_all(self, x: f64, max_degree: usize, out: &mut Vec<f64>) {
        out.clear();
        out.push(1.0);
        if max_degree == 0 {
            return;
        }
        out.push(x);
        for n in 1..max_degree {
            let nf = n as f64;
            let next = match self {
                BasisKind::Legendre => ((2.0 * nf + 1.0) * x * out[n] - nf * out[n - 1]) / (nf + 1.0),
                BasisKind::Hermite => x * out[n] - nf * out[n - 1],
            };
            out.push(next);
        }
        let mut factorial = 1.0;
        for (n, v) in out.iter_mut().enumerate() {
            match self {
                BasisKind::Legendre => *v *= (2.0 * n as f64 + 1.0).sqrt(),
                BasisKind::Hermite => {
                    if n > 0 {
                        factorial *= n as f64;
                    }
                    *v /= factorial.sqrt();
                }
            }
        }
    }

    pub fn eval(self, x: f64, degree: usize) -> f64 {
        let mut v = Vec::with_capacity(degree + 1);
        self.eval_all(x, degree, &mut v);
        v[degree]
    }
}

/// Maps a natural-scale input to the standard variable of its basis.
pub fn standardize(m: &Marginal, x: f64) -> f64 {
    match *m {
        Marginal::Uniform { a, b } => 2.0 * (x - a) / (b - a) - 1.0,
        Marginal::Normal { mean, sd } => (x - mean) / sd,
    }
}

/// Product of univariate orthonormal polynomials at a standardized point.
pub fn basis_eval(index: &MultiIndex, u: &[f64], kinds: &[BasisKind]) -> f64 {
    index
        .0
        .iter()
        .zip(u)
        .zip(kinds)
        .map(|((&d, &x), &k)| if d == 0 { 1.0 } else { k.eval(x, d as usize) })
        .product()
}

/// Univariate values for every input up to `max_degree`; `table[j][d]`.
pub(crate) fn univariate_table(u: &[f64], kinds: &[BasisKind], max_degree: usize) -> Vec<Vec<f64>> {
    u.iter()
        .zip(kinds)
        .map(|(&x, &k)| {
            let mut v = Vec::with_capacity(max_degree + 1);
            k.eval_all(x, max_degree, &mut v);
            v
        })
        .collect()
}

pub(crate) fn eval_from_table(index: &MultiIndex, table: &[Vec<f64>]) -> f64 {
    index.0.iter().zip(table).map(|(&d, row)| row[d as usize]).product()
}
