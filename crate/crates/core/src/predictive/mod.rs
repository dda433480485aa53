//! Sampling-based forward propagation and predictive summaries.

mod kde;
mod overlay;

pub use kde::{
    kde_fit, kernel_sum, quantile_sorted, renormalize, silverman_bandwidth, sorted_copy, trapezoid, uniform_grid,
    DensityEstimate, KDE_GRID_POINTS,
};
pub use overlay::{normalized_overlay, OverlayCurve, OverlayPair, OverlayReport, ScenarioProfiles, OVERLAY_THRESHOLD};

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::PosteriorSamples;
use crate::error::{ensure, Error, Result};
use crate::forward_model::{ResponseModel, TCProfile};
use crate::seed;

/// Predicted responses per thermocouple; `values[tc]` is row-major
/// `n_samples x n_knots`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveEnsemble {
    pub labels: Vec<String>,
    pub depths: Vec<f64>,
    pub knots: Vec<f64>,
    pub n_samples: usize,
    pub values: Vec<Vec<f64>>,
    pub emulator: bool,
    pub seed: u64,
    pub provenance: String,
}

impl PredictiveEnsemble {
    pub fn n_knots(&self) -> usize {
        self.knots.len()
    }

    pub fn knot_samples(&self, tc: usize, knot: usize) -> Vec<f64> {
        let k = self.n_knots();
        (0..self.n_samples).map(|s| self.values[tc][s * k + knot]).collect()
    }

    pub fn sample_profile(&self, tc: usize, sample: usize) -> &[f64] {
        let k = self.n_knots();
        &self.values[tc][sample * k..(sample + 1) * k]
    }

    /// Intervals at `level` for every (TC, knot).
    pub fn intervals(&self, level: f64) -> Result<PredictionInterval> {
        ensure!(self.n_samples >= 2, "intervals need at least 2 samples");
        let mut lo = Vec::with_capacity(self.labels.len());
        let mut hi = Vec::with_capacity(self.labels.len());
        for tc in 0..self.labels.len() {
            let (l, h): (Vec<f64>, Vec<f64>) = (0..self.n_knots())
                .map(|k| prediction_interval(&self.knot_samples(tc, k), level))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .unzip();
            lo.push(l);
            hi.push(h);
        }
        Ok(PredictionInterval { level, lo, hi })
    }

    /// CSV for one thermocouple: header of knot times, one row per sample.
    pub fn write_tc_csv<W: Write>(&self, tc: usize, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = self.knots.iter().map(|t| t.to_string()).collect();
        writeln!(out, "{}", header.join(","))?;
        for s in 0..self.n_samples {
            let row: Vec<String> = self.sample_profile(tc, s).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub level: f64,
    /// `lo[tc][knot]`.
    pub lo: Vec<Vec<f64>>,
    pub hi: Vec<Vec<f64>>,
}

/// Pushes parameter samples through `model` onto `knots`.
///
/// With `sigma_em`, each (TC, knot) response gets independent log-normal noise
/// `exp(sigma_em[i] * z)`. Sample `i` draws its noise from its own stream, so
/// the result does not depend on thread scheduling.
pub fn propagate(
    param_samples: &[Vec<f64>],
    model: &dyn ResponseModel,
    sigma_em: Option<&[f64]>,
    knots: &[f64],
    seed_value: u64,
) -> Result<PredictiveEnsemble> {
    ensure!(!param_samples.is_empty(), "no parameter samples to propagate");
    ensure!(!knots.is_empty(), "no knots");
    if let Some(s) = sigma_em {
        ensure!(
            s.len() == param_samples.len(),
            "{} sigma_em values for {} parameter samples",
            s.len(),
            param_samples.len()
        );
        ensure!(s.iter().all(|v| *v >= 0.0 && v.is_finite()), "sigma_em values must be non-negative");
    }
    let labels = model.output_labels();
    let n_tc = labels.len();
    let n_k = knots.len();
    let per_sample: Vec<(Vec<Vec<f64>>, Vec<f64>)> = param_samples
        .par_iter()
        .enumerate()
        .map(|(i, theta)| {
            let profiles = model.evaluate(theta)?;
            ensure!(profiles.len() == n_tc, "model returned {} profiles, expected {n_tc}", profiles.len());
            let mut rng = seed::stream_rng(seed_value, i as u64);
            let mut out = Vec::with_capacity(n_tc);
            for p in &profiles {
                let at = p.resample(knots);
                let mut row = at.values;
                for (k, v) in row.iter_mut().enumerate() {
                    if !(*v > 0.0) {
                        return Err(Error::Domain {
                            tc: p.label.clone(),
                            index: k,
                            message: format!("model output {v} at sample {i} must be positive"),
                        });
                    }
                    if let Some(s) = sigma_em {
                        let z: f64 = rng.sample(StandardNormal);
                        *v *= (s[i] * z).exp();
                    }
                }
                out.push(row);
            }
            Ok((out, profiles.iter().map(|p| p.depth).collect()))
        })
        .collect::<Result<_>>()?;

    let mut values = vec![Vec::with_capacity(param_samples.len() * n_k); n_tc];
    for (rows, _) in &per_sample {
        for (tc, row) in rows.iter().enumerate() {
            values[tc].extend_from_slice(row);
        }
    }
    Ok(PredictiveEnsemble {
        labels,
        depths: per_sample[0].1.clone(),
        knots: knots.to_vec(),
        n_samples: param_samples.len(),
        values,
        emulator: sigma_em.is_some(),
        seed: seed_value,
        provenance: String::new(),
    })
}

/// Equal-tailed empirical interval at `level` (type-7 quantiles).
pub fn prediction_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    ensure!(samples.len() >= 2, "prediction interval needs at least 2 samples, got {}", samples.len());
    ensure!(level > 0.0 && level < 1.0, "level must lie in (0, 1), got {level}");
    let s = sorted_copy(samples);
    let tail = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&s, tail), quantile_sorted(&s, 1.0 - tail)))
}

/// Model response at the stored MAP point (projected onto the model inputs).
pub fn map_trajectory(posterior: &PosteriorSamples, model: &dyn ResponseModel) -> Result<Vec<TCProfile>> {
    ensure!(!posterior.map_point.is_empty(), "posterior has no MAP point");
    let theta = posterior.select_map(model.input_names())?;
    model.evaluate(&theta)
}

/// Long-format interval table `tc,time,level,lo,hi`.
pub fn write_intervals_csv<W: Write>(ens: &PredictiveEnsemble, intervals: &[PredictionInterval], mut out: W) -> std::io::Result<()> {
    writeln!(out, "tc,time,level,lo,hi")?;
    for (tc, label) in ens.labels.iter().enumerate() {
        for pi in intervals {
            for (k, t) in ens.knots.iter().enumerate() {
                writeln!(out, "{label},{t},{},{},{}", pi.level, pi.lo[tc][k], pi.hi[tc][k])?;
            }
        }
    }
    Ok(())
}

/// `time,<label>...` table of profiles sharing one time grid.
pub fn write_profiles_csv<W: Write>(profiles: &[TCProfile], mut out: W) -> std::io::Result<()> {
    let labels: Vec<&str> = profiles.iter().map(|p| p.label.as_str()).collect();
    writeln!(out, "time,{}", labels.join(","))?;
    if let Some(first) = profiles.first() {
        for (i, t) in first.times.iter().enumerate() {
            let row: Vec<String> = profiles.iter().map(|p| p.values[i].to_string()).collect();
            writeln!(out, "{t},{}", row.join(","))?;
        }
    }
    Ok(())
}
