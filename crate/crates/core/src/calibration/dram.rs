//! Delayed-rejection adaptive Metropolis.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::seed;

/// Unnormalised log target; `-inf` marks states outside the support.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64 + Sync> LogDensity for (usize, F) {
    fn dim(&self) -> usize {
        self.0
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        (self.1)(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DramConfig {
    pub n_samples: usize,
    /// Initial proposal standard deviation per coordinate (diagonal covariance).
    /// Empty means 0.1 in every coordinate.
    pub proposal_sd: Vec<f64>,
    /// First adaptation step; `None` means 10% of the chain.
    pub adapt_start: Option<usize>,
    pub adapt_interval: usize,
    /// Covariance scale of the second-stage proposal.
    pub dr_scale: f64,
    pub eps_reg: f64,
    pub seed: u64,
}

impl Default for DramConfig {
    fn default() -> Self {
        DramConfig {
            n_samples: 50_000,
            proposal_sd: Vec::new(),
            adapt_start: None,
            adapt_interval: 100,
            dr_scale: 0.2,
            eps_reg: 1e-10,
            seed: 0,
        }
    }
}

impl DramConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        ensure!(self.n_samples >= 2, "chain needs at least 2 samples, got {}", self.n_samples);
        ensure!(
            self.proposal_sd.is_empty() || self.proposal_sd.len() == dim,
            "proposal_sd has {} entries for a {dim}-dimensional target",
            self.proposal_sd.len()
        );
        ensure!(
            self.proposal_sd.iter().all(|s| *s > 0.0 && s.is_finite()),
            "proposal standard deviations must be positive"
        );
        ensure!(self.adapt_interval >= 1, "adaptation interval must be at least 1");
        ensure!(self.dr_scale > 0.0 && self.dr_scale.is_finite(), "DR scale must be positive");
        ensure!(self.eps_reg >= 0.0, "eps_reg must be non-negative");
        Ok(())
    }

    fn adapt_start(&self, dim: usize) -> usize {
        self.adapt_start.unwrap_or(self.n_samples / 10).max(dim + 1)
    }
}

/// One Markov chain. `states` is row-major `n_samples x dim`; row 0 is the
/// initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub dim: usize,
    pub states: Vec<f64>,
    pub log_posterior: Vec<f64>,
    pub acceptance_rate: f64,
    pub seed: u64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.log_posterior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_posterior.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }
}

/// Gaussian proposal with a cached Cholesky factor.
struct Proposal {
    chol: DMatrix<f64>,
}

impl Proposal {
    fn new(cov: DMatrix<f64>) -> Option<Self> {
        Cholesky::new(cov).map(|c| Proposal { chol: c.l() })
    }

    fn scaled(&self, factor: f64) -> Proposal {
        Proposal {
            chol: &self.chol * factor.sqrt(),
        }
    }

    fn draw(&self, x: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let z = DVector::from_iterator(x.len(), (0..x.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let step = &self.chol * z;
        x.iter().zip(step.iter()).map(|(a, b)| a + b).collect()
    }

    /// `-0.5 (b - a)^T C^-1 (b - a)`; the normalising constant cancels in DR ratios.
    fn log_kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let d = DVector::from_iterator(a.len(), a.iter().zip(b).map(|(x, y)| y - x));
        let w = self
            .chol
            .solve_lower_triangular(&d)
            .expect("Cholesky factor has positive diagonal");
        -0.5 * w.norm_squared()
    }
}

/// Running mean and scatter matrix (Welford).
struct RunningCov {
    n: usize,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
}

impl RunningCov {
    fn new(dim: usize) -> Self {
        RunningCov {
            n: 0,
            mean: DVector::zeros(dim),
            m2: DMatrix::zeros(dim, dim),
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let x = DVector::from_column_slice(x);
        let d_old = &x - &self.mean;
        self.mean += &d_old / self.n as f64;
        let d_new = &x - &self.mean;
        self.m2 += &d_old * d_new.transpose();
    }

    fn covariance(&self) -> DMatrix<f64> {
        let mut c = &self.m2 / (self.n.max(2) - 1) as f64;
        // Symmetrise against rounding in the rank-one updates.
        c = (&c + c.transpose()) * 0.5;
        c
    }
}

/// Runs a single DRAM chain from `init`.
pub fn dram_run<T: LogDensity + ?Sized>(target: &T, init: &[f64], cfg: &DramConfig) -> Result<Chain> {
    let dim = target.dim();
    ensure!(init.len() == dim, "initial state has {} entries, target has {dim}", init.len());
    cfg.validate(dim)?;
    let lp0 = target.log_density(init);
    ensure!(lp0.is_finite(), "initial state has non-finite log-posterior {lp0}");

    let mut rng = seed::rng(cfg.seed);
    let sd0: Vec<f64> = if cfg.proposal_sd.is_empty() {
        vec![0.1; dim]
    } else {
        cfg.proposal_sd.clone()
    };
    let mut stage1 = Proposal::new(DMatrix::from_diagonal(&DVector::from_iterator(dim, sd0.iter().map(|s| s * s))))
        .ok_or_else(|| Error::InvalidArgument("initial proposal covariance is not positive definite".into()))?;
    let mut stage2 = stage1.scaled(cfg.dr_scale);
    let s_d = 2.4 * 2.4 / dim as f64;
    let adapt_start = cfg.adapt_start(dim);

    let mut states = Vec::with_capacity(cfg.n_samples * dim);
    let mut log_post = Vec::with_capacity(cfg.n_samples);
    let mut x = init.to_vec();
    let mut lx = lp0;
    states.extend_from_slice(&x);
    log_post.push(lx);
    let mut history = RunningCov::new(dim);
    history.push(&x);

    let mut accepted = 0usize;
    let mut warnings = Vec::new();
    let early_window = 10 * dim;

    for i in 1..cfg.n_samples {
        let y1 = stage1.draw(&x, &mut rng);
        let l1 = target.log_density(&y1);
        let log_a1 = if l1.is_finite() { (l1 - lx).min(0.0) } else { f64::NEG_INFINITY };
        let u: f64 = rng.random();
        if u.ln() < log_a1 {
            x = y1;
            lx = l1;
            accepted += 1;
        } else {
            let y2 = stage2.draw(&x, &mut rng);
            let l2 = target.log_density(&y2);
            if l2.is_finite() {
                // alpha_1(y2 -> y1); the move is impossible when it equals one.
                let back = if l1.is_finite() { (l1 - l2).min(0.0) } else { f64::NEG_INFINITY };
                if back < 0.0 {
                    let num = l2 + stage1.log_kernel(&y2, &y1) + ln_one_minus_exp(back);
                    let den = lx + stage1.log_kernel(&x, &y1) + ln_one_minus_exp(log_a1);
                    let u2: f64 = rng.random();
                    if u2.ln() < (num - den).min(0.0) {
                        x = y2;
                        lx = l2;
                        accepted += 1;
                    }
                }
            }
        }
        if i == early_window && accepted == 0 {
            warnings.push(format!("no proposal accepted in the first {early_window} steps"));
        }
        states.extend_from_slice(&x);
        log_post.push(lx);
        history.push(&x);

        if i >= adapt_start && (i - adapt_start) % cfg.adapt_interval == 0 {
            let mut cov = history.covariance();
            for k in 0..dim {
                cov[(k, k)] += cfg.eps_reg;
            }
            if let Some(p) = Proposal::new(cov * s_d) {
                stage2 = p.scaled(cfg.dr_scale);
                stage1 = p;
            }
        }
    }

    Ok(Chain {
        dim,
        states,
        log_posterior: log_post,
        acceptance_rate: accepted as f64 / (cfg.n_samples - 1) as f64,
        seed: cfg.seed,
        warnings,
    })
}

/// `ln(1 - e^a)` for `a <= 0`.
fn ln_one_minus_exp(a: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        0.0
    } else if a > -std::f64::consts::LN_2 {
        (-a.exp_m1()).ln()
    } else {
        (-a.exp()).ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub n_chains: usize,
    pub chain: DramConfig,
    /// Attempts per chain at drawing an initial state with finite posterior.
    pub init_tries: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            n_chains: 4,
            chain: DramConfig::default(),
            init_tries: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainEnsemble {
    pub param_names: Vec<String>,
    pub chains: Vec<Chain>,
    pub config: EnsembleConfig,
}

impl ChainEnsemble {
    pub fn dim(&self) -> usize {
        self.param_names.len()
    }

    pub fn n_samples(&self) -> usize {
        self.chains.first().map_or(0, Chain::len)
    }

    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.chains.iter().map(|c| c.acceptance_rate).collect()
    }

    /// Ensemble identifier derived from the seeds of its chains.
    pub fn id(&self) -> String {
        format!("ensemble-{:016x}", self.config.chain.seed)
    }
}

/// Runs `cfg.n_chains` independent chains in parallel.
///
/// Chain `k` uses a seed derived from `cfg.chain.seed` and `k`, and starts
/// from a draw of `init` with finite log-posterior.
pub fn run_ensemble<T, F>(target: &T, param_names: Vec<String>, init: F, cfg: &EnsembleConfig) -> Result<ChainEnsemble>
where
    T: LogDensity + ?Sized,
    F: Fn(&mut ChaCha8Rng) -> Vec<f64> + Sync,
{
    ensure!(cfg.n_chains >= 1, "need at least one chain");
    ensure!(
        param_names.len() == target.dim(),
        "{} parameter names for a {}-dimensional target",
        param_names.len(),
        target.dim()
    );
    cfg.chain.validate(target.dim())?;
    let chains = (0..cfg.n_chains)
        .into_par_iter()
        .map(|k| {
            let chain_seed = seed::indexed_seed(cfg.chain.seed, k as u64);
            let mut init_rng = seed::stream_rng(chain_seed, 1);
            let start = (0..cfg.init_tries)
                .map(|_| init(&mut init_rng))
                .find(|x| target.log_density(x).is_finite())
                .ok_or_else(|| {
                    Error::DegenerateDistribution(format!(
                        "chain {k}: no initial state with finite posterior in {} prior draws",
                        cfg.init_tries
                    ))
                })?;
            let chain_cfg = DramConfig {
                seed: chain_seed,
                ..cfg.chain.clone()
            };
            dram_run(target, &start, &chain_cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ChainEnsemble {
        param_names,
        chains,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_normal() -> (usize, impl Fn(&[f64]) -> f64 + Sync) {
        (1, |x: &[f64]| -0.5 * x[0] * x[0])
    }

    fn moments(xs: impl Iterator<Item = f64>) -> (f64, f64) {
        let v: Vec<f64> = xs.collect();
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        (m, s)
    }

    #[test]
    fn standard_normal_moments() {
        let cfg = DramConfig { n_samples: 50_000, proposal_sd: vec![1.0], seed: 17, ..Default::default() };
        let chain = dram_run(&std_normal(), &[0.5], &cfg).unwrap();
        let (m, s) = moments(chain.states[10_000..].iter().copied());
        assert!(m.abs() < 0.05, "mean {m}");
        assert!((s - 1.0).abs() < 0.05, "sd {s}");
        assert!((0.0..=1.0).contains(&chain.acceptance_rate));
    }

    #[test]
    fn flat_target_histogram() {
        let target = (1, |x: &[f64]| if (0.0..=1.0).contains(&x[0]) { 0.0 } else { f64::NEG_INFINITY });
        let cfg = DramConfig { n_samples: 100_000, proposal_sd: vec![0.3], seed: 5, ..Default::default() };
        let chain = dram_run(&target, &[0.5], &cfg).unwrap();
        // Thinning leaves nearly independent draws, so plain multinomial bounds apply.
        let kept: Vec<f64> = chain.states[10_000..].iter().step_by(30).copied().collect();
        let mut bins = [0usize; 10];
        for x in &kept {
            assert!((0.0..=1.0).contains(x));
            bins[((x * 10.0) as usize).min(9)] += 1;
        }
        let n = kept.len() as f64;
        let bound = 3.0 * (n * 0.1 * 0.9).sqrt();
        for b in bins {
            assert!((b as f64 - n / 10.0).abs() < bound, "bins {bins:?}");
        }
    }

    #[test]
    fn point_mass_start_still_moves() {
        let target = (2, |x: &[f64]| -0.5 * (x[0] * x[0] + x[1] * x[1]));
        let cfg = DramConfig {
            n_samples: 2_000,
            proposal_sd: vec![1e-12, 1e-12],
            adapt_start: Some(10),
            adapt_interval: 10,
            seed: 1,
            ..Default::default()
        };
        let chain = dram_run(&target, &[0.0, 0.0], &cfg).unwrap();
        let last = chain.state(chain.len() - 1);
        assert!(last.iter().any(|v| *v != 0.0));
        assert!(chain.acceptance_rate > 0.0);
    }

    #[test]
    fn rejects_infinite_start() {
        let target = (1, |_: &[f64]| f64::NEG_INFINITY);
        assert!(dram_run(&target, &[0.0], &DramConfig::default()).is_err());
    }

    #[test]
    fn seeded_reproducibility_and_distinct_chains() {
        let cfg = EnsembleConfig {
            n_chains: 3,
            chain: DramConfig { n_samples: 500, seed: 42, ..Default::default() },
            init_tries: 10,
        };
        let init = |r: &mut ChaCha8Rng| vec![r.sample::<f64, _>(StandardNormal)];
        let a = run_ensemble(&std_normal(), vec!["x".into()], init, &cfg).unwrap();
        let b = run_ensemble(&std_normal(), vec!["x".into()], init, &cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.chains[0].states[0], a.chains[1].states[0]);
        assert_eq!(a.n_samples(), 500);
    }

    #[test]
    fn init_failure_is_numerical() {
        let target = (1, |_: &[f64]| f64::NEG_INFINITY);
        let cfg = EnsembleConfig { n_chains: 1, init_tries: 5, ..Default::default() };
        let err = run_ensemble(&target, vec!["x".into()], |_| vec![0.0], &cfg).unwrap_err();
        assert!(matches!(err, Error::DegenerateDistribution(_)));
    }

    #[test]
    fn ln_one_minus_exp_values() {
        assert_eq!(ln_one_minus_exp(f64::NEG_INFINITY), 0.0);
        assert!((ln_one_minus_exp(0.5f64.ln()) - 0.5f64.ln()).abs() < 1e-15);
        assert!((ln_one_minus_exp(-1e-3) - (1.0 - (-1e-3f64).exp()).ln()).abs() < 1e-12);
    }
}
