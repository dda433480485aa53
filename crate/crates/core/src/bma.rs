//! Bayesian model averaging over a small fixed model set.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{PosteriorSamples, PriorSpec};
use crate::error::{ensure, Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// Calibrated against one experiment.
    Updated { posterior: PosteriorSamples, data_id: String },
    /// The prior before any update.
    Unupdated { prior: PriorSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesianModel {
    pub label: String,
    #[serde(flatten)]
    pub kind: ModelKind,
    pub prior_probability: f64,
}

impl BayesianModel {
    pub fn names(&self) -> Vec<String> {
        match &self.kind {
            ModelKind::Updated { posterior, .. } => posterior.names.clone(),
            ModelKind::Unupdated { prior } => prior.names(),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.kind {
            ModelKind::Updated { posterior, .. } => posterior.samples[rng.random_range(0..posterior.len())].clone(),
            ModelKind::Unupdated { prior } => prior.sample(rng),
        }
    }

    fn is_empty(&self) -> bool {
        matches!(&self.kind, ModelKind::Updated { posterior, .. } if posterior.is_empty())
    }
}

/// Checks probabilities, non-empty sample sets and a shared parameter layout.
pub fn validate_model_set(models: &[BayesianModel]) -> Result<()> {
    ensure!(!models.is_empty(), "model set is empty");
    for m in models {
        ensure!(
            (0.0..=1.0).contains(&m.prior_probability),
            "model '{}' has prior probability {} outside [0, 1]",
            m.label,
            m.prior_probability
        );
        ensure!(
            !(m.prior_probability > 0.0 && m.is_empty()),
            "model '{}' has positive probability but no posterior samples",
            m.label
        );
    }
    let total: f64 = models.iter().map(|m| m.prior_probability).sum();
    ensure!((total - 1.0).abs() <= 1e-12, "model prior probabilities sum to {total}, not 1");
    let names = models[0].names();
    for m in &models[1..] {
        ensure!(
            m.names() == names,
            "model '{}' has parameters {:?}, expected {:?}",
            m.label,
            m.names(),
            names
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidenceEstimate {
    pub log_evidence: f64,
    /// Jackknife standard error of `log_evidence`.
    pub std_error: f64,
    pub n_mc: usize,
    /// Draws with non-zero likelihood.
    pub n_finite: usize,
}

/// Where evidence draws come from.
#[derive(Debug, Clone, Copy)]
pub enum EvidenceSource<'a> {
    Prior(&'a PriorSpec),
    Samples(&'a [Vec<f64>]),
}

/// Plain Monte Carlo estimate of `p(y) = E_prior[L(theta)]` in log space.
pub fn estimate_evidence<F>(source: EvidenceSource<'_>, log_likelihood: F, n_mc: usize, seed_value: u64) -> Result<EvidenceEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    ensure!(n_mc >= 100, "evidence needs at least 100 draws, got {n_mc}");
    if let EvidenceSource::Samples(s) = source {
        ensure!(!s.is_empty(), "evidence sample set is empty");
    }
    let log_l: Vec<f64> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::stream_rng(seed_value, i as u64);
            let theta = match source {
                EvidenceSource::Prior(p) => p.sample(&mut rng),
                EvidenceSource::Samples(s) => s[rng.random_range(0..s.len())].clone(),
            };
            let l = log_likelihood(&theta);
            if l.is_nan() {
                f64::NEG_INFINITY
            } else {
                l
            }
        })
        .collect();
    let n_finite = log_l.iter().filter(|l| l.is_finite()).count();
    if n_finite == 0 {
        return Err(Error::EvidenceUnderflow { n_mc });
    }
    let n = n_mc as f64;
    let m = log_l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = log_l.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = scaled.iter().sum();
    let log_evidence = m + (total / n).ln();

    // Leave-one-out log means; recomputed directly where cancellation bites.
    let loo: Vec<f64> = (0..n_mc)
        .map(|i| {
            let rest = total - scaled[i];
            if rest > 1e-8 * total {
                m + (rest / (n - 1.0)).ln()
            } else {
                let others = log_sum_exp(log_l.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, l)| *l));
                others - (n - 1.0).ln()
            }
        })
        .collect();
    let std_error = if loo.iter().all(|v| v.is_finite()) {
        let mean = loo.iter().sum::<f64>() / n;
        ((n - 1.0) / n * loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(EvidenceEstimate {
        log_evidence,
        std_error,
        n_mc,
        n_finite,
    })
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `P(M_j | y)` from log-evidences and model priors.
pub fn model_posterior(log_evidences: &[f64], priors: &[f64]) -> Result<Vec<f64>> {
    ensure!(
        log_evidences.len() == priors.len(),
        "{} evidences but {} priors",
        log_evidences.len(),
        priors.len()
    );
    ensure!(priors.iter().all(|p| (0.0..=1.0).contains(p)), "model priors must lie in [0, 1]");
    let total: f64 = priors.iter().sum();
    ensure!((total - 1.0).abs() <= 1e-12, "model priors sum to {total}, not 1");
    let terms: Vec<f64> = log_evidences
        .iter()
        .zip(priors)
        .map(|(&le, &p)| if p == 0.0 { f64::NEG_INFINITY } else { le + p.ln() })
        .collect();
    let norm = log_sum_exp(terms.iter().copied());
    ensure!(norm.is_finite(), "every model with positive prior has zero evidence");
    Ok(terms.iter().map(|t| (t - norm).exp()).collect())
}

pub fn bayes_factor(log_ev_j: f64, log_ev_k: f64) -> f64 {
    (log_ev_j - log_ev_k).exp()
}

/// `w * posterior + (1 - w) * prior`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePrior {
    pub w: f64,
    pub informative: PosteriorSamples,
    pub noninformative: PriorSpec,
}

impl MixturePrior {
    /// The two-model set this mixture stands for.
    pub fn model_set(&self) -> Vec<BayesianModel> {
        vec![
            BayesianModel {
                label: "informed".into(),
                kind: ModelKind::Updated {
                    posterior: self.informative.clone(),
                    data_id: self.informative.source.clone(),
                },
                prior_probability: self.w,
            },
            BayesianModel {
                label: "up".into(),
                kind: ModelKind::Unupdated {
                    prior: self.noninformative.clone(),
                },
                prior_probability: 1.0 - self.w,
            },
        ]
    }
}

/// Draws from the model-averaged prior: each draw picks a model with its
/// prior probability, then a parameter vector from that model.
pub fn bma_prior_sample(models: &[BayesianModel], n: usize, seed_value: u64) -> Result<Vec<Vec<f64>>> {
    validate_model_set(models)?;
    let cumulative: Vec<f64> = models
        .iter()
        .scan(0.0, |acc, m| {
            *acc += m.prior_probability;
            Some(*acc)
        })
        .collect();
    let last_positive = models.iter().rposition(|m| m.prior_probability > 0.0).expect("probabilities sum to 1");
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::stream_rng(seed_value, i as u64);
            let u: f64 = rng.random();
            let k = cumulative
                .iter()
                .zip(models)
                .position(|(c, m)| u < *c && m.prior_probability > 0.0)
                .unwrap_or(last_positive);
            models[k].draw(&mut rng)
        })
        .collect())
}

pub fn mixture_sample(mix: &MixturePrior, n: usize, seed_value: u64) -> Result<Vec<Vec<f64>>> {
    ensure!((0.0..=1.0).contains(&mix.w), "mixing weight {} outside [0, 1]", mix.w);
    ensure!(
        !(mix.w > 0.0 && mix.informative.is_empty()),
        "mixing weight {} needs informative samples",
        mix.w
    );
    bma_prior_sample(&mix.model_set(), n, seed_value)
}

/// Integer allocation of `n` proportional to `weights` by largest remainder;
/// ties go to the earlier model.
pub fn largest_remainder(weights: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &k in order.iter().take(n.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

/// Pools `n` draws (with replacement) from per-model posteriors, stratified
/// by model weight.
pub fn bma_posterior(weights: &[f64], per_model: &[&[Vec<f64>]], n: usize, seed_value: u64) -> Result<Vec<Vec<f64>>> {
    ensure!(weights.len() == per_model.len(), "{} weights for {} models", weights.len(), per_model.len());
    ensure!(weights.iter().all(|w| *w >= 0.0), "weights must be non-negative");
    let total: f64 = weights.iter().sum();
    ensure!((total - 1.0).abs() <= 1e-9, "weights sum to {total}, not 1");
    for (k, (w, s)) in weights.iter().zip(per_model).enumerate() {
        ensure!(!(*w > 0.0 && s.is_empty()), "model {k} has weight {w} but no samples");
    }
    let counts = largest_remainder(weights, n);
    let mut rng = seed::rng(seed_value);
    let mut out = Vec::with_capacity(n);
    for (count, samples) in counts.into_iter().zip(per_model) {
        for _ in 0..count {
            out.push(samples[rng.random_range(0..samples.len())].clone());
        }
    }
    Ok(out)
}
