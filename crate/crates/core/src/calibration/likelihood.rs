//! Gaussian likelihood on log-transformed responses.

use serde::{Deserialize, Serialize};

use super::prior::Marginal;
use crate::error::{ensure, Error, Result};
use crate::forward_model::TCProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodMode {
    /// One `sigma_L` per thermocouple.
    PerTc,
    /// A single `sigma_em` shared by all thermocouples.
    Emulator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodSpec {
    pub mode: LikelihoodMode,
    /// Prior for every sigma, on the natural (not log) scale.
    #[serde(default = "default_sigma_prior")]
    pub sigma_prior: Marginal,
    /// Observation noise sd on the log scale; added in quadrature to sigma.
    #[serde(default)]
    pub epsilon: f64,
}

fn default_sigma_prior() -> Marginal {
    Marginal::Uniform { a: 1e-4, b: 0.5 }
}

impl LikelihoodSpec {
    pub fn new(mode: LikelihoodMode) -> Self {
        LikelihoodSpec {
            mode,
            sigma_prior: default_sigma_prior(),
            epsilon: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sigma_prior.validate()?;
        if let Marginal::Uniform { a, .. } = self.sigma_prior {
            ensure!(a > 0.0, "sigma prior must have strictly positive support, lower bound is {a}");
        }
        ensure!(
            self.epsilon.is_finite() && self.epsilon >= 0.0,
            "epsilon must be finite and non-negative, got {}",
            self.epsilon
        );
        Ok(())
    }

    /// Number of sigma hyperparameters for `n_tc` thermocouples.
    pub fn n_sigmas(&self, n_tc: usize) -> usize {
        match self.mode {
            LikelihoodMode::PerTc => n_tc,
            LikelihoodMode::Emulator => 1,
        }
    }

    pub fn sigma_names(&self, tc_labels: &[String]) -> Vec<String> {
        match self.mode {
            LikelihoodMode::PerTc => tc_labels.iter().map(|l| format!("sigma_{l}")).collect(),
            LikelihoodMode::Emulator => vec!["sigma_em".to_string()],
        }
    }
}

/// Log-likelihood of `data` given time-aligned `predictions`.
///
/// For each thermocouple with `nu` points and effective variance
/// `s2 = sigma^2 + epsilon^2` the contribution is
/// `-nu/2 ln(2 pi s2) - sum (ln y - ln f)^2 / (2 s2)`.
pub fn log_likelihood(
    sigmas: &[f64],
    data: &[TCProfile],
    predictions: &[TCProfile],
    spec: &LikelihoodSpec,
) -> Result<f64> {
    ensure!(
        data.len() == predictions.len(),
        "{} data profiles but {} predictions",
        data.len(),
        predictions.len()
    );
    ensure!(
        sigmas.len() == spec.n_sigmas(data.len()),
        "expected {} sigma values, got {}",
        spec.n_sigmas(data.len()),
        sigmas.len()
    );
    let mut total = 0.0;
    for (k, (y, f)) in data.iter().zip(predictions).enumerate() {
        ensure!(
            y.values.len() == f.values.len(),
            "thermocouple '{}': {} data points but {} predictions",
            y.label,
            y.values.len(),
            f.values.len()
        );
        let sigma = match spec.mode {
            LikelihoodMode::PerTc => sigmas[k],
            LikelihoodMode::Emulator => sigmas[0],
        };
        ensure!(sigma > 0.0 && sigma.is_finite(), "sigma for '{}' must be positive, got {sigma}", y.label);
        let var = sigma * sigma + spec.epsilon * spec.epsilon;
        let mut ss = 0.0;
        for (i, (&yv, &fv)) in y.values.iter().zip(&f.values).enumerate() {
            if !(yv > 0.0) || !(fv > 0.0) {
                return Err(Error::Domain {
                    tc: y.label.clone(),
                    index: i,
                    message: format!("log-likelihood needs positive values, got data {yv} and prediction {fv}"),
                });
            }
            let r = (yv / fv).ln();
            ss += r * r;
        }
        let nu = y.values.len() as f64;
        total += -0.5 * nu * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * ss / var;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn profile(label: &str, values: Vec<f64>) -> TCProfile {
        TCProfile {
            label: label.into(),
            times: (0..values.len()).map(|i| i as f64).collect(),
            values,
            depth: 0.0,
        }
    }

    #[test]
    fn perfect_fit() {
        let y = vec![profile("TC1", vec![300.0, 400.0, 500.0])];
        let spec = LikelihoodSpec::new(LikelihoodMode::PerTc);
        let ll = log_likelihood(&[0.1], &y, &y, &spec).unwrap();
        let expect = -0.5 * 3.0 * (2.0 * std::f64::consts::PI * 0.01).ln();
        assert!((ll - expect).abs() < 1e-12);
    }

    #[test]
    fn one_sigma_residual() {
        let sigma: f64 = 0.2;
        let y = vec![profile("TC1", vec![500.0])];
        let f = vec![profile("TC1", vec![500.0 / sigma.exp()])];
        let spec = LikelihoodSpec::new(LikelihoodMode::PerTc);
        let ll = log_likelihood(&[sigma], &y, &f, &spec).unwrap();
        let expect = -0.5 * (2.0 * std::f64::consts::PI * sigma * sigma).ln() - 0.5;
        assert!((ll - expect).abs() < 1e-12);
    }

    #[test]
    fn non_positive_is_domain_error() {
        let y = vec![profile("TC1", vec![300.0, 400.0]), profile("TC2", vec![300.0, 0.0])];
        let spec = LikelihoodSpec::new(LikelihoodMode::Emulator);
        match log_likelihood(&[0.1], &y, &y, &spec) {
            Err(Error::Domain { tc, index, .. }) => assert_eq!((tc.as_str(), index), ("TC2", 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn epsilon_adds_in_quadrature() {
        let y = vec![profile("TC1", vec![500.0, 501.0])];
        let f = vec![profile("TC1", vec![499.0, 503.0])];
        let mut spec = LikelihoodSpec::new(LikelihoodMode::Emulator);
        spec.epsilon = 0.03;
        let a = log_likelihood(&[0.04], &y, &f, &spec).unwrap();
        spec.epsilon = 0.0;
        let b = log_likelihood(&[0.05], &y, &f, &spec).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn emulator_equals_tied_per_tc(
            vals in prop::collection::vec((1.0f64..2000.0, 1.0f64..2000.0), 1..12),
            n_tc in 1usize..4,
            sigma in 1e-3f64..1.0,
        ) {
            let data: Vec<_> = (0..n_tc).map(|k| profile(&format!("TC{k}"), vals.iter().map(|v| v.0 * (k + 1) as f64).collect())).collect();
            let pred: Vec<_> = (0..n_tc).map(|k| profile(&format!("TC{k}"), vals.iter().map(|v| v.1).collect())).collect();
            let em = log_likelihood(&[sigma], &data, &pred, &LikelihoodSpec::new(LikelihoodMode::Emulator)).unwrap();
            let per = log_likelihood(&vec![sigma; n_tc], &data, &pred, &LikelihoodSpec::new(LikelihoodMode::PerTc)).unwrap();
            prop_assert_eq!(em, per);
        }

        #[test]
        fn scale_invariance(
            vals in prop::collection::vec((1.0f64..2000.0, 1.0f64..2000.0), 1..12),
            c in 1e-3f64..1e3,
        ) {
            let spec = LikelihoodSpec::new(LikelihoodMode::PerTc);
            let y = vec![profile("a", vals.iter().map(|v| v.0).collect())];
            let f = vec![profile("a", vals.iter().map(|v| v.1).collect())];
            let ys = vec![profile("a", vals.iter().map(|v| v.0 * c).collect())];
            let fs = vec![profile("a", vals.iter().map(|v| v.1 * c).collect())];
            let a = log_likelihood(&[0.05], &y, &f, &spec).unwrap();
            let b = log_likelihood(&[0.05], &ys, &fs, &spec).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
