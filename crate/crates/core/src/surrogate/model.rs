//! Sparse polynomial chaos expansions for scalar outputs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::basis::{basis_eval, eval_from_table, hyperbolic_multi_indices, standardize, univariate_table, BasisKind, MultiIndex};
use super::lar::{lar_order, select_support, Design};
use crate::calibration::PriorSpec;
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PceConfig {
    /// Hyperbolic truncation exponent.
    pub q: f64,
    /// Stop growing the order once the normalised LOO error reaches this.
    pub cv_target: f64,
    pub max_order: u32,
}

impl Default for PceConfig {
    fn default() -> Self {
        PceConfig {
            q: 0.75,
            cv_target: 1e-3,
            max_order: 8,
        }
    }
}

impl PceConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.q > 0.0 && self.q <= 1.0, "q must lie in (0, 1], got {}", self.q);
        ensure!(self.cv_target >= 0.0, "cv_target must be non-negative");
        ensure!(self.max_order >= 1, "max_order must be at least 1");
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PCEModel {
    pub inputs: PriorSpec,
    pub basis_kinds: Vec<BasisKind>,
    pub q: f64,
    pub order: u32,
    /// Retained terms; the zero index comes first.
    pub indices: Vec<MultiIndex>,
    pub coefficients: Vec<f64>,
    pub loo_error: f64,
}

impl PCEModel {
    pub fn constant(inputs: PriorSpec, value: f64, q: f64) -> Self {
        let p = inputs.dim();
        PCEModel {
            basis_kinds: inputs.marginals().map(BasisKind::for_marginal).collect(),
            inputs,
            q,
            order: 0,
            indices: vec![MultiIndex(vec![0; p])],
            coefficients: vec![value],
            loo_error: 0.0,
        }
    }

    pub fn max_degree(&self) -> usize {
        self.indices
            .iter()
            .flat_map(|i| i.degrees().iter().copied())
            .max()
            .unwrap_or(0) as usize
    }

    pub(crate) fn eval_table(&self, table: &[Vec<f64>]) -> f64 {
        self.indices
            .iter()
            .zip(&self.coefficients)
            .map(|(i, a)| a * eval_from_table(i, table))
            .sum()
    }
}

/// Maps a parameter vector to the standard variables of its bases.
pub fn standardize_point(inputs: &PriorSpec, theta: &[f64]) -> Vec<f64> {
    inputs.marginals().zip(theta).map(|(m, &x)| standardize(m, x)).collect()
}

pub fn pce_eval(model: &PCEModel, theta: &[f64]) -> Result<f64> {
    ensure!(
        theta.len() == model.inputs.dim(),
        "expected {} inputs, got {}",
        model.inputs.dim(),
        theta.len()
    );
    let u = standardize_point(&model.inputs, theta);
    Ok(model
        .indices
        .iter()
        .zip(&model.coefficients)
        .map(|(i, a)| a * basis_eval(i, &u, &model.basis_kinds))
        .sum())
}

/// Mean and variance implied by orthonormality.
pub fn pce_moments(model: &PCEModel) -> (f64, f64) {
    let mut mean = 0.0;
    let mut var = 0.0;
    for (i, a) in model.indices.iter().zip(&model.coefficients) {
        if i.is_zero() {
            mean += a;
        } else {
            var += a * a;
        }
    }
    (mean, var)
}

/// Fits one expansion to `(samples, outputs)`.
pub fn fit(samples: &[Vec<f64>], outputs: &[f64], priors: &PriorSpec, cfg: &PceConfig) -> Result<PCEModel> {
    let ys = vec![outputs.to_vec()];
    fit_many(samples, &ys, priors, cfg)?.pop().expect("one output")
}

/// Fits one expansion per output column over a shared experimental design.
/// The outer error covers problems with the design itself; inner errors are
/// per output.
pub(crate) fn fit_many(
    samples: &[Vec<f64>],
    outputs: &[Vec<f64>],
    priors: &PriorSpec,
    cfg: &PceConfig,
) -> Result<Vec<Result<PCEModel>>> {
    cfg.validate()?;
    priors.validate()?;
    let p = priors.dim();
    let n = samples.len();
    ensure!(
        samples.iter().all(|s| s.len() == p),
        "every sample must have {p} coordinates"
    );
    ensure!(
        n >= 2 * (p + 1),
        "{n} samples are too few for a {p}-input expansion; need at least {}",
        2 * (p + 1)
    );
    for (k, y) in outputs.iter().enumerate() {
        ensure!(y.len() == n, "output {k} has {} values for {n} samples", y.len());
        ensure!(y.iter().all(|v| v.is_finite()), "output {k} contains non-finite values");
    }
    let kinds: Vec<BasisKind> = priors.marginals().map(BasisKind::for_marginal).collect();
    let points: Vec<Vec<f64>> = samples.iter().map(|s| standardize_point(priors, s)).collect();

    struct State {
        var_y: f64,
        best: Option<PCEModel>,
        done: bool,
    }
    let mut states: Vec<State> = outputs
        .iter()
        .map(|y| {
            let mean = y.iter().sum::<f64>() / n as f64;
            let var_y = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let constant = y.iter().all(|v| *v == y[0]);
            State {
                var_y,
                best: constant.then(|| PCEModel::constant(priors.clone(), y[0], cfg.q)),
                done: constant,
            }
        })
        .collect();

    for order in 1..=cfg.max_order {
        if states.iter().all(|s| s.done) {
            break;
        }
        let indices = hyperbolic_multi_indices(p, order, cfg.q);
        let design = Design::new(&points, &kinds, indices);
        if order == 1 && design.has_dead_column() {
            return Err(Error::DegenerateDesign {
                basis_size: design.indices.len(),
            });
        }
        let max_steps = (design.indices.len() - 1).min(n.saturating_sub(2));
        states.par_iter_mut().zip(outputs.par_iter()).for_each(|(state, y)| {
            if state.done {
                return;
            }
            let path = lar_order(&design, y, max_steps);
            let Some(sel) = select_support(&design, y, &path, state.var_y) else { return };
            let improves = match &state.best {
                None => true,
                Some(b) => sel.loo < b.loo_error - (1e-9 * b.loo_error + 1e-14),
            };
            if improves {
                state.best = Some(PCEModel {
                    inputs: priors.clone(),
                    basis_kinds: kinds.clone(),
                    q: cfg.q,
                    order,
                    indices: sel.support.iter().map(|&j| design.indices[j].clone()).collect(),
                    coefficients: sel.coefficients,
                    loo_error: sel.loo,
                });
            }
            if state.best.as_ref().is_some_and(|b| b.loo_error <= cfg.cv_target) {
                state.done = true;
            }
        });
    }

    Ok(states
        .into_iter()
        .map(|s| {
            s.best.ok_or(Error::DegenerateDesign {
                basis_size: hyperbolic_multi_indices(p, cfg.max_order, cfg.q).len(),
            })
        })
        .collect())
}

/// Evaluates several models that share inputs at one point.
pub(crate) fn eval_shared(models: &[&PCEModel], inputs: &PriorSpec, theta: &[f64]) -> Vec<f64> {
    let u = standardize_point(inputs, theta);
    let max_degree = models.iter().map(|m| m.max_degree()).max().unwrap_or(0);
    let kinds: Vec<BasisKind> = inputs.marginals().map(BasisKind::for_marginal).collect();
    let table = univariate_table(&u, &kinds, max_degree);
    models.iter().map(|m| m.eval_table(&table)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::Marginal;
    use crate::seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn uniform_1d() -> PriorSpec {
        PriorSpec::new(vec![("x", Marginal::Uniform { a: -1.0, b: 1.0 })]).unwrap()
    }

    fn lhs_1d(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![-1.0 + 2.0 * (i as f64 + 0.37) / n as f64]).collect()
    }

    fn coefficient(m: &PCEModel, idx: &[u32]) -> f64 {
        m.indices
            .iter()
            .position(|i| i.degrees() == idx)
            .map_or(0.0, |k| m.coefficients[k])
    }

    #[test]
    fn constant_output() {
        let xs = lhs_1d(20);
        let m = fit(&xs, &vec![4.5; 20], &uniform_1d(), &PceConfig::default()).unwrap();
        assert_eq!(m.coefficients, vec![4.5]);
        assert_eq!(m.loo_error, 0.0);
        assert_eq!(pce_eval(&m, &[0.3]).unwrap(), 4.5);
        assert_eq!(pce_moments(&m), (4.5, 0.0));
    }

    #[test]
    fn square_on_uniform() {
        let xs = lhs_1d(200);
        let ys: Vec<f64> = xs.iter().map(|x| x[0] * x[0]).collect();
        let m = fit(&xs, &ys, &uniform_1d(), &PceConfig::default()).unwrap();
        assert!((coefficient(&m, &[0]) - 1.0 / 3.0).abs() < 1e-8);
        assert!((coefficient(&m, &[2]) - 2.0 / (3.0 * 5f64.sqrt())).abs() < 1e-8);
        assert!(coefficient(&m, &[1]).abs() < 1e-8);
        assert!(m.loo_error <= 1e-10);
        assert!((pce_eval(&m, &[0.5]).unwrap() - 0.25).abs() < 1e-8);
        let (mean, var) = pce_moments(&m);
        assert!((mean - 1.0 / 3.0).abs() < 1e-8 && (var - 4.0 / 45.0).abs() < 1e-8);
    }

    #[test]
    fn linear_on_normals() {
        let prior = PriorSpec::new(vec![
            ("a", Marginal::Normal { mean: 0.0, sd: 1.0 }),
            ("b", Marginal::Normal { mean: 0.0, sd: 1.0 }),
        ])
        .unwrap();
        let mut rng = seed::rng(8);
        let xs: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rng.sample(StandardNormal), rng.sample(StandardNormal)])
            .collect();
        let ys: Vec<f64> = xs.iter().map(|x| x[0] + x[1]).collect();
        let m = fit(&xs, &ys, &prior, &PceConfig::default()).unwrap();
        assert!((coefficient(&m, &[1, 0]) - 1.0).abs() < 1e-10);
        assert!((coefficient(&m, &[0, 1]) - 1.0).abs() < 1e-10);
        assert!(m.loo_error <= 1e-10);
        assert!(pce_eval(&m, &[0.0, 0.0]).unwrap().abs() < 1e-10);
    }

    #[test]
    fn nonstandard_marginals_and_interactions() {
        let prior = PriorSpec::new(vec![
            ("a", Marginal::Uniform { a: 2.0, b: 5.0 }),
            ("b", Marginal::Normal { mean: 1.0, sd: 0.5 }),
            ("c", Marginal::Uniform { a: -3.0, b: 0.0 }),
        ])
        .unwrap();
        let mut rng = seed::rng(2);
        let xs: Vec<Vec<f64>> = (0..150).map(|_| prior.sample(&mut rng)).collect();
        let f = |x: &[f64]| 1.0 + x[0] * x[1] - 0.3 * x[2].powi(3) + x[1] * x[1];
        let ys: Vec<f64> = xs.iter().map(|x| f(x)).collect();
        let cfg = PceConfig { q: 1.0, ..Default::default() };
        let m = fit(&xs, &ys, &prior, &cfg).unwrap();
        assert!(m.loo_error <= 1e-10, "loo {}", m.loo_error);
        for _ in 0..20 {
            let x = prior.sample(&mut rng);
            assert!((pce_eval(&m, &x).unwrap() - f(&x)).abs() < 1e-8);
        }
    }

    #[test]
    fn moments_match_monte_carlo() {
        let prior = PriorSpec::new(vec![
            ("a", Marginal::Uniform { a: 0.0, b: 1.0 }),
            ("b", Marginal::Normal { mean: 0.0, sd: 2.0 }),
        ])
        .unwrap();
        let mut rng = seed::rng(6);
        let xs: Vec<Vec<f64>> = (0..300).map(|_| prior.sample(&mut rng)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x[0] * 3.0).sin() + 0.2 * x[1] * x[0]).collect();
        let m = fit(&xs, &ys, &prior, &PceConfig::default()).unwrap();
        let (mean, var) = pce_moments(&m);
        let vals: Vec<f64> = (0..100_000).map(|_| pce_eval(&m, &prior.sample(&mut rng)).unwrap()).collect();
        let mc_mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let mc_var = vals.iter().map(|v| (v - mc_mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        assert!((mc_var / var - 1.0).abs() < 0.01, "{mc_var} vs {var}");
        assert!((mc_mean - mean).abs() < 0.01);
    }

    #[test]
    fn degenerate_design() {
        let xs = vec![vec![0.5]; 10];
        let ys: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(
            fit(&xs, &ys, &uniform_1d(), &PceConfig::default()),
            Err(Error::DegenerateDesign { basis_size: 2 })
        ));
    }

    #[test]
    fn too_few_samples() {
        assert!(fit(&lhs_1d(3), &[1.0, 2.0, 3.0], &uniform_1d(), &PceConfig::default()).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let m = PCEModel::constant(uniform_1d(), 1.0, 0.75);
        assert!(pce_eval(&m, &[0.0, 1.0]).is_err());
    }
}
