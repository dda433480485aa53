//! Posterior over model inputs and likelihood sigmas.
//!
//! The sampler state is `((theta - m) / s, ln sigma)` with `m`, `s` the prior
//! mean and sd of each input, so one proposal scale suits inputs of any
//! magnitude. Sigmas move on the log scale, so their natural-scale prior
//! picks up the Jacobian `sigma`; the input Jacobian is constant.

use rand::Rng;

use super::dram::{run_ensemble, ChainEnsemble, EnsembleConfig, LogDensity};
use super::likelihood::{log_likelihood, LikelihoodSpec};
use super::prior::PriorSpec;
use crate::error::{ensure, Error, Result};
use crate::forward_model::{ResponseModel, TCProfile};

pub struct CalibrationTarget<'a> {
    model: &'a dyn ResponseModel,
    prior: PriorSpec,
    likelihood: LikelihoodSpec,
    data: Vec<TCProfile>,
    n_sigmas: usize,
}

impl<'a> CalibrationTarget<'a> {
    /// `prior` must list the model inputs in the model's input order.
    pub fn new(model: &'a dyn ResponseModel, prior: PriorSpec, likelihood: LikelihoodSpec, data: Vec<TCProfile>) -> Result<Self> {
        prior.validate()?;
        likelihood.validate()?;
        ensure!(
            prior.names() == model.input_names(),
            "prior parameters {:?} do not match model inputs {:?}",
            prior.names(),
            model.input_names()
        );
        ensure!(!data.is_empty(), "calibration needs at least one data profile");
        ensure!(
            data.len() == model.output_labels().len(),
            "{} data profiles but the model produces {}",
            data.len(),
            model.output_labels().len()
        );
        ensure!(data.iter().all(|d| !d.is_empty()), "every data profile must be non-empty");
        for d in &data {
            if let Some(v) = d.values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidArgument(format!(
                    "data for '{}' must be positive and finite for the log-error likelihood, got {v}",
                    d.label
                )));
            }
        }
        let n_sigmas = likelihood.n_sigmas(data.len());
        Ok(CalibrationTarget {
            model,
            prior,
            likelihood,
            data,
            n_sigmas,
        })
    }

    pub fn names(&self) -> Vec<String> {
        let labels: Vec<String> = self.data.iter().map(|d| d.label.clone()).collect();
        let mut names = self.prior.names();
        names.extend(self.likelihood.sigma_names(&labels));
        names
    }

    /// Maps a sampler state to `(theta, sigma)` on the natural scale.
    pub fn to_natural(&self, state: &[f64]) -> Vec<f64> {
        let p = self.prior.dim();
        self.prior
            .marginals()
            .zip(&state[..p])
            .map(|(m, z)| m.mean() + m.sd() * z)
            .chain(state[p..].iter().map(|v| v.exp()))
            .collect()
    }

    pub fn to_internal(&self, natural: &[f64]) -> Vec<f64> {
        let p = self.prior.dim();
        self.prior
            .marginals()
            .zip(&natural[..p])
            .map(|(m, x)| (x - m.mean()) / m.sd())
            .chain(natural[p..].iter().map(|v| v.ln()))
            .collect()
    }

    /// Draws a sampler state from the prior.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut natural = self.prior.sample(rng);
        for _ in 0..self.n_sigmas {
            natural.push(self.likelihood.sigma_prior.sample(rng));
        }
        self.to_internal(&natural)
    }

    /// Log-likelihood at a natural-scale point; model predictions are
    /// interpolated onto the data times.
    pub fn log_likelihood(&self, natural: &[f64]) -> Result<f64> {
        let p = self.prior.dim();
        let preds = self.model.evaluate(&natural[..p])?;
        ensure!(preds.len() == self.data.len(), "model returned {} profiles", preds.len());
        let aligned: Vec<TCProfile> = preds.iter().zip(&self.data).map(|(f, d)| f.resample(&d.times)).collect();
        log_likelihood(&natural[p..], &self.data, &aligned, &self.likelihood)
    }

    /// Calibrates with an ensemble of DRAM chains; returned states are on the
    /// natural scale.
    pub fn calibrate(&self, cfg: &EnsembleConfig) -> Result<ChainEnsemble> {
        let mut ens = run_ensemble(self, self.names(), |rng| self.sample_initial(rng), cfg)?;
        for chain in &mut ens.chains {
            let d = chain.dim;
            for row in chain.states.chunks_mut(d) {
                let nat = self.to_natural(row);
                row.copy_from_slice(&nat);
            }
        }
        Ok(ens)
    }
}

impl LogDensity for CalibrationTarget<'_> {
    fn dim(&self) -> usize {
        self.prior.dim() + self.n_sigmas
    }

    fn log_density(&self, state: &[f64]) -> f64 {
        let p = self.prior.dim();
        let natural = self.to_natural(state);
        let mut lp = self.prior.log_prior(&natural[..p]);
        for &log_sigma in &state[p..] {
            let sigma = log_sigma.exp();
            lp += self.likelihood.sigma_prior.log_pdf(sigma) + log_sigma;
        }
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        match self.log_likelihood(&natural) {
            Ok(ll) if ll.is_finite() => lp + ll,
            _ => f64::NEG_INFINITY,
        }
    }
}
