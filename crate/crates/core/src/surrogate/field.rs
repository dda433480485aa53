//! Frozen-time surrogates: one expansion per (thermocouple, time knot).

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{eval_shared, fit_many, PCEModel, PceConfig};
use crate::calibration::PriorSpec;
use crate::error::{ensure, Error, Result};
use crate::forward_model::{ResponseModel, TCProfile};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotFailure {
    pub tc: usize,
    pub knot: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSurrogate {
    pub input_names: Vec<String>,
    pub inputs: PriorSpec,
    pub labels: Vec<String>,
    pub depths: Vec<f64>,
    pub time_knots: Vec<f64>,
    /// `models[tc][knot]`.
    pub models: Vec<Vec<PCEModel>>,
    /// Knots whose fit failed; they hold the constant sample-mean model.
    pub failures: Vec<KnotFailure>,
}

/// `0, s, 2s, ...` up to and including `duration` (within rounding).
pub fn uniform_knots(duration: f64, spacing: f64) -> Result<Vec<f64>> {
    ensure!(spacing > 0.0 && duration > 0.0, "knot spacing and duration must be positive");
    let n = (duration / spacing + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| i as f64 * spacing).collect())
}

/// Latin hypercube design mapped through the prior marginals.
pub fn latin_hypercube(priors: &PriorSpec, n: usize, seed_value: u64) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(seed_value);
    let p = priors.dim();
    let mut u = vec![vec![0.0; p]; n];
    for j in 0..p {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        for (row, s) in u.iter_mut().zip(strata) {
            row[j] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    u.into_iter()
        .map(|row| {
            row.iter()
                .zip(priors.marginals())
                .map(|(&q, m)| m.quantile(q).0)
                .collect()
        })
        .collect()
}

/// Evaluates `model` at every sample, in parallel.
pub fn sample_runs(model: &dyn ResponseModel, samples: &[Vec<f64>]) -> Result<Vec<Vec<TCProfile>>> {
    samples.par_iter().map(|s| model.evaluate(s)).collect()
}

impl FieldSurrogate {
    pub fn n_models(&self) -> usize {
        self.models.iter().map(Vec::len).sum()
    }

    pub fn worst_loo(&self) -> f64 {
        self.models
            .iter()
            .flatten()
            .map(|m| m.loo_error)
            .fold(0.0, f64::max)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        crate::calibration::write_json(path, self)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Fits one expansion per (thermocouple, knot) from solver runs at `samples`.
/// Run outputs are interpolated linearly onto the knots.
pub fn fit_field(
    samples: &[Vec<f64>],
    runs: &[Vec<TCProfile>],
    priors: &PriorSpec,
    time_knots: &[f64],
    cfg: &PceConfig,
) -> Result<FieldSurrogate> {
    ensure!(samples.len() == runs.len(), "{} samples but {} runs", samples.len(), runs.len());
    ensure!(!runs.is_empty(), "no runs to fit");
    ensure!(!time_knots.is_empty(), "no time knots");
    ensure!(
        time_knots.windows(2).all(|w| w[1] > w[0]),
        "time knots must be strictly increasing"
    );
    let first = &runs[0];
    let n_tc = first.len();
    for (k, run) in runs.iter().enumerate() {
        ensure!(run.len() == n_tc, "run {k} has {} profiles, expected {n_tc}", run.len());
        for (a, b) in run.iter().zip(first) {
            ensure!(a.label == b.label, "run {k} has profile '{}' where '{}' was expected", a.label, b.label);
            ensure!(a.times == b.times, "run {k} profile '{}' has a different time grid", a.label);
        }
    }
    for p in first {
        let (t0, t1) = (p.times[0], p.times[p.times.len() - 1]);
        ensure!(
            time_knots[0] >= t0 - 1e-9 && time_knots[time_knots.len() - 1] <= t1 + 1e-9,
            "knots [{}, {}] outside the run time span [{t0}, {t1}] of '{}'",
            time_knots[0],
            time_knots[time_knots.len() - 1],
            p.label
        );
    }

    // outputs[tc * n_knots + knot][run]
    let n_knots = time_knots.len();
    let mut outputs = vec![Vec::with_capacity(runs.len()); n_tc * n_knots];
    for run in runs {
        for (tc, profile) in run.iter().enumerate() {
            let at = profile.resample(time_knots);
            for (k, v) in at.values.into_iter().enumerate() {
                outputs[tc * n_knots + k].push(v);
            }
        }
    }
    let fits = fit_many(samples, &outputs, priors, cfg)?;
    let mut models = vec![Vec::with_capacity(n_knots); n_tc];
    let mut failures = Vec::new();
    for (flat, fit) in fits.into_iter().enumerate() {
        let (tc, knot) = (flat / n_knots, flat % n_knots);
        let model = match fit {
            Ok(m) => m,
            Err(e) => {
                failures.push(KnotFailure {
                    tc,
                    knot,
                    message: e.to_string(),
                });
                let y = &outputs[flat];
                let mut fallback = PCEModel::constant(priors.clone(), y.iter().sum::<f64>() / y.len() as f64, cfg.q);
                fallback.loo_error = 1.0;
                fallback
            }
        };
        models[tc].push(model);
    }
    Ok(FieldSurrogate {
        input_names: priors.names(),
        inputs: priors.clone(),
        labels: first.iter().map(|p| p.label.clone()).collect(),
        depths: first.iter().map(|p| p.depth).collect(),
        time_knots: time_knots.to_vec(),
        models,
        failures,
    })
}

impl ResponseModel for FieldSurrogate {
    fn input_names(&self) -> &[String] {
        &self.input_names
    }

    fn output_labels(&self) -> Vec<String> {
        self.labels.clone()
    }

    fn evaluate(&self, theta: &[f64]) -> Result<Vec<TCProfile>> {
        ensure!(
            theta.len() == self.input_names.len(),
            "expected {} inputs, got {}",
            self.input_names.len(),
            theta.len()
        );
        let all: Vec<&PCEModel> = self.models.iter().flatten().collect();
        let values = eval_shared(&all, &self.inputs, theta);
        let n_knots = self.time_knots.len();
        Ok(self
            .labels
            .iter()
            .enumerate()
            .map(|(tc, label)| TCProfile {
                label: label.clone(),
                times: self.time_knots.clone(),
                values: values[tc * n_knots..(tc + 1) * n_knots].to_vec(),
                depth: self.depths[tc],
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::Marginal;

    fn prior() -> PriorSpec {
        PriorSpec::new(vec![
            ("a", Marginal::Uniform { a: 1.0, b: 2.0 }),
            ("b", Marginal::Normal { mean: 0.0, sd: 1.0 }),
        ])
        .unwrap()
    }

    fn run(theta: &[f64], n_tc: usize, constant: bool) -> Vec<TCProfile> {
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
        (0..n_tc)
            .map(|k| TCProfile {
                label: format!("TC{}", k + 1),
                values: times
                    .iter()
                    .map(|t| if constant { 300.0 } else { 300.0 + theta[0] * t * (k + 1) as f64 + theta[1] * theta[0] })
                    .collect(),
                times: times.clone(),
                depth: k as f64,
            })
            .collect()
    }

    #[test]
    fn knots() {
        assert_eq!(uniform_knots(60.0, 1.0).unwrap().len(), 61);
        assert_eq!(uniform_knots(1.0, 0.3).unwrap(), vec![0.0, 0.3, 0.6, 0.8999999999999999]);
    }

    #[test]
    fn constant_in_time() {
        let p = prior();
        let xs = latin_hypercube(&p, 30, 1);
        let runs: Vec<_> = xs.iter().map(|x| run(x, 1, true)).collect();
        let knots = uniform_knots(10.0, 1.0).unwrap();
        let f = fit_field(&xs, &runs, &p, &knots, &PceConfig::default()).unwrap();
        assert_eq!(f.n_models(), 11);
        for m in &f.models[0] {
            assert_eq!(m.coefficients, vec![300.0]);
        }
    }

    #[test]
    fn count_and_reproduction() {
        let p = prior();
        let xs = latin_hypercube(&p, 40, 2);
        let runs: Vec<_> = xs.iter().map(|x| run(x, 2, false)).collect();
        let knots: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let f = fit_field(&xs, &runs, &p, &knots, &PceConfig::default()).unwrap();
        assert_eq!(f.n_models(), 20);
        assert!(f.failures.is_empty());
        assert!(f.worst_loo() < 1e-10);
        let theta = [1.3, -0.4];
        let out = f.evaluate(&theta).unwrap();
        let expect = run(&theta, 2, false);
        for (o, e) in out.iter().zip(&expect) {
            for (t, v) in o.times.iter().zip(&o.values) {
                let idx = (t * 2.0).round() as usize;
                assert!((v - e.values[idx]).abs() < 1e-8);
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.json");
        f.write_json(&path).unwrap();
        assert_eq!(FieldSurrogate::read_json(&path).unwrap(), f);
    }

    #[test]
    fn lhs_strata() {
        let p = PriorSpec::new(vec![("u", Marginal::Uniform { a: 0.0, b: 1.0 })]).unwrap();
        let mut xs: Vec<f64> = latin_hypercube(&p, 10, 3).into_iter().map(|v| v[0]).collect();
        xs.sort_by(f64::total_cmp);
        for (i, x) in xs.iter().enumerate() {
            assert!(*x >= i as f64 / 10.0 && *x < (i + 1) as f64 / 10.0);
        }
    }
}
