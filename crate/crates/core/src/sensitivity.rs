//! Morris elementary-effects screening in the joint quantile space.
//!
//! Trajectories live on the `d`-level grid of `[0,1]^p`; each step moves one
//! coordinate by `±Δ` with `Δ = c/(d-1)`. Points are mapped through the prior
//! inverse CDFs before the model sees them, so non-uniform inputs are handled
//! by perturbing their quantiles.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::PriorSpec;
use crate::error::{ensure, Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryConfig {
    /// Number of trajectories.
    pub r: usize,
    /// Grid levels per coordinate.
    pub levels: usize,
    /// Level jump per step.
    pub jump: usize,
    pub seed: u64,
    /// Grid coordinates `u` are mapped to `lo + (hi - lo) u` before the
    /// inverse CDFs, keeping unbounded marginals away from their far tails.
    pub quantile_range: [f64; 2],
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig {
            r: 100,
            levels: 101,
            jump: 1,
            seed: 0,
            quantile_range: [0.0, 1.0],
        }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.r >= 1, "need at least one trajectory");
        ensure!(self.levels >= 2, "need at least two grid levels, got {}", self.levels);
        ensure!(
            (1..self.levels).contains(&self.jump),
            "level jump must lie in [1, {}], got {}",
            self.levels - 1,
            self.jump
        );
        let [lo, hi] = self.quantile_range;
        ensure!(
            (0.0..1.0).contains(&lo) && hi > lo && hi <= 1.0,
            "quantile range must satisfy 0 <= lo < hi <= 1, got [{lo}, {hi}]"
        );
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        self.jump as f64 / (self.levels - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `p + 1` points in quantile space.
    pub points: Vec<Vec<f64>>,
    /// Input moved at each step.
    pub perturbed_index: Vec<usize>,
    /// Direction of each step, `+1` or `-1`.
    pub signs: Vec<f64>,
}

/// Builds `cfg.r` trajectories over `p` inputs.
///
/// Starting points come from a Latin hypercube on the continuum, snapped to
/// the nearest grid level from which a jump stays inside `[0,1]`. The order of
/// perturbed inputs is a fresh permutation per trajectory, and the direction is
/// random wherever both directions are feasible.
pub fn build_trajectories(p: usize, cfg: &TrajectoryConfig) -> Result<Vec<Trajectory>> {
    ensure!(p >= 1, "need at least one input");
    cfg.validate()?;
    let top = cfg.levels - 1;
    let c = cfg.jump;
    let mut rng = seed::rng(cfg.seed);

    let feasible = |k: usize| k + c <= top || k >= c;
    let feasible_levels: Vec<usize> = (0..=top).filter(|&k| feasible(k)).collect();

    // Latin hypercube: one stratum per trajectory in every coordinate.
    let mut starts = vec![vec![0usize; p]; cfg.r];
    for j in 0..p {
        let mut strata: Vec<usize> = (0..cfg.r).collect();
        strata.shuffle(&mut rng);
        for (t, stratum) in strata.into_iter().enumerate() {
            let u = (stratum as f64 + rng.random::<f64>()) / cfg.r as f64;
            starts[t][j] = nearest_level(&feasible_levels, u * top as f64);
        }
    }

    let scale = top as f64;
    let trajectories = starts
        .into_iter()
        .map(|mut level| {
            let mut order: Vec<usize> = (0..p).collect();
            order.shuffle(&mut rng);
            let mut points = Vec::with_capacity(p + 1);
            let mut signs = Vec::with_capacity(p);
            points.push(level.iter().map(|&k| k as f64 / scale).collect::<Vec<_>>());
            for &i in &order {
                let up = level[i] + c <= top;
                let down = level[i] >= c;
                let forward = match (up, down) {
                    (true, true) => rng.random::<bool>(),
                    (true, false) => true,
                    (false, true) => false,
                    (false, false) => unreachable!("start levels are feasible"),
                };
                if forward {
                    level[i] += c;
                    signs.push(1.0);
                } else {
                    level[i] -= c;
                    signs.push(-1.0);
                }
                points.push(level.iter().map(|&k| k as f64 / scale).collect());
            }
            Trajectory {
                points,
                perturbed_index: order,
                signs,
            }
        })
        .collect();
    Ok(trajectories)
}

fn nearest_level(levels: &[usize], target: f64) -> usize {
    *levels
        .iter()
        .min_by(|&&a, &&b| {
            (a as f64 - target)
                .abs()
                .total_cmp(&(b as f64 - target).abs())
        })
        .expect("at least one feasible level")
}

/// Finite-difference quotient of one step; `delta_signed` carries the step
/// direction, so a linear response yields its slope either way.
#[inline]
pub fn elementary_effect(f_perturbed: f64, f_base: f64, delta_signed: f64) -> f64 {
    debug_assert!(delta_signed != 0.0);
    (f_perturbed - f_base) / delta_signed
}

/// Morris statistics for one output, indexed by input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorrisStats {
    pub mu: Vec<f64>,
    pub mu_star: Vec<f64>,
    /// Sample standard deviation (divisor `r - 1`); `None` when `r < 2`.
    pub sigma: Vec<Option<f64>>,
}

/// Reduces EE samples (`ee_samples[input][trajectory]`) to `mu`, `mu*`, `sigma`.
pub fn morris_statistics(ee_samples: &[Vec<f64>]) -> MorrisStats {
    let mut stats = MorrisStats {
        mu: Vec::with_capacity(ee_samples.len()),
        mu_star: Vec::with_capacity(ee_samples.len()),
        sigma: Vec::with_capacity(ee_samples.len()),
    };
    for samples in ee_samples {
        let r = samples.len() as f64;
        let mu = samples.iter().sum::<f64>() / r;
        let mu_star = samples.iter().map(|e| e.abs()).sum::<f64>() / r;
        let sigma = (samples.len() >= 2).then(|| {
            let ss: f64 = samples.iter().map(|e| (e - mu).powi(2)).sum();
            (ss / (r - 1.0)).sqrt()
        });
        stats.mu.push(mu);
        stats.mu_star.push(mu_star);
        stats.sigma.push(sigma);
    }
    stats
}

/// Maps a quantile-space point to parameter values through each marginal's
/// inverse CDF. Warnings name inputs whose quantile was clamped.
pub fn quantile_map(point: &[f64], priors: &PriorSpec) -> Result<(Vec<f64>, Vec<String>)> {
    ensure!(
        point.len() == priors.dim(),
        "point has {} coordinates but the prior has {}",
        point.len(),
        priors.dim()
    );
    let mut warnings = Vec::new();
    let mut values = Vec::with_capacity(point.len());
    for (u, p) in point.iter().zip(&priors.params) {
        ensure!((0.0..=1.0).contains(u), "quantile {u} for '{}' outside [0, 1]", p.name);
        let (x, clamped) = p.marginal.quantile(*u);
        if clamped {
            warnings.push(format!("quantile {u} of '{}' clamped before the normal inverse CDF", p.name));
        }
        values.push(x);
    }
    Ok((values, warnings))
}

/// Screening result over all outputs of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorrisResult {
    pub input_names: Vec<String>,
    pub output_names: Vec<String>,
    /// One entry per output.
    pub stats: Vec<MorrisStats>,
    pub warnings: Vec<String>,
}

impl MorrisResult {
    /// Per input, `mu*` and `sigma` maximised over all outputs.
    pub fn maxima(&self) -> (Vec<f64>, Vec<f64>) {
        let p = self.input_names.len();
        let mut mu_star_max = vec![0.0f64; p];
        let mut sigma_max = vec![0.0f64; p];
        for s in &self.stats {
            for i in 0..p {
                mu_star_max[i] = mu_star_max[i].max(s.mu_star[i]);
                sigma_max[i] = sigma_max[i].max(s.sigma[i].unwrap_or(0.0));
            }
        }
        (mu_star_max, sigma_max)
    }

    /// `input,<out>_mu,<out>_mu_star,<out>_sigma,...`; absent sigma is left empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header = vec!["input".to_string()];
        for name in &self.output_names {
            header.push(format!("{name}_mu"));
            header.push(format!("{name}_mu_star"));
            header.push(format!("{name}_sigma"));
        }
        writeln!(out, "{}", header.join(","))?;
        for (i, input) in self.input_names.iter().enumerate() {
            write!(out, "{input}")?;
            for s in &self.stats {
                let sigma = s.sigma[i].map(|v| v.to_string()).unwrap_or_default();
                write!(out, ",{},{},{}", s.mu[i], s.mu_star[i], sigma)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Long-format `(mu*, sigma)` pairs for plotting, including the maxima rows.
    pub fn write_plot_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "output,input,mu_star,sigma")?;
        let (mu_star_max, sigma_max) = self.maxima();
        for (i, input) in self.input_names.iter().enumerate() {
            writeln!(out, "max,{input},{},{}", mu_star_max[i], sigma_max[i])?;
        }
        for (name, s) in self.output_names.iter().zip(&self.stats) {
            for (i, input) in self.input_names.iter().enumerate() {
                writeln!(out, "{name},{input},{},{}", s.mu_star[i], s.sigma[i].unwrap_or(0.0))?;
            }
        }
        Ok(())
    }
}

/// Runs the full screening design against a vector-valued model.
///
/// Model evaluations run in parallel; statistics are assembled in trajectory
/// order so the result does not depend on scheduling.
pub fn run_morris<F>(
    priors: &PriorSpec,
    output_names: Vec<String>,
    cfg: &TrajectoryConfig,
    model: F,
) -> Result<MorrisResult>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let p = priors.dim();
    let trajectories = build_trajectories(p, cfg)?;
    let delta = cfg.delta();

    let mut warnings = Vec::new();
    let mut mapped = Vec::with_capacity(trajectories.len() * (p + 1));
    for t in &trajectories {
        for point in &t.points {
            let [lo, hi] = cfg.quantile_range;
            let scaled: Vec<f64> = point.iter().map(|u| lo + (hi - lo) * u).collect();
            let (values, w) = quantile_map(&scaled, priors)?;
            warnings.extend(w);
            mapped.push(values);
        }
    }
    let outputs: Vec<Vec<f64>> = mapped.par_iter().map(|theta| model(theta)).collect::<Result<_>>()?;
    let n_out = output_names.len();
    if let Some(bad) = outputs.iter().find(|o| o.len() != n_out) {
        return Err(Error::InvalidArgument(format!(
            "model returned {} outputs, expected {n_out}",
            bad.len()
        )));
    }

    // ee[output][input][trajectory]
    let mut ee = vec![vec![Vec::with_capacity(trajectories.len()); p]; n_out];
    for (t_idx, t) in trajectories.iter().enumerate() {
        let base = t_idx * (p + 1);
        for (step, (&input, &sign)) in t.perturbed_index.iter().zip(&t.signs).enumerate() {
            let before = &outputs[base + step];
            let after = &outputs[base + step + 1];
            for o in 0..n_out {
                ee[o][input].push(elementary_effect(after[o], before[o], sign * delta));
            }
        }
    }
    let stats = ee.iter().map(|per_input| morris_statistics(per_input)).collect();
    warnings.sort();
    warnings.dedup();
    Ok(MorrisResult {
        input_names: priors.names(),
        output_names,
        stats,
        warnings,
    })
}

/// Outcome of distance-based screening.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Screening {
    /// Indices of influential inputs, in input order.
    pub influential: Vec<usize>,
    /// `sqrt(mu*_max^2 + sigma_max^2)` per input.
    pub distances: Vec<f64>,
    pub warning: Option<String>,
}

/// Keeps inputs whose `(mu*_max, sigma_max)` point lies at least
/// `fraction` of the largest distance from the origin.
pub fn screen(mu_star_max: &[f64], sigma_max: &[f64], fraction: f64) -> Result<Screening> {
    ensure!(fraction > 0.0 && fraction < 1.0, "fraction must lie in (0, 1), got {fraction}");
    ensure!(mu_star_max.len() == sigma_max.len(), "mu* and sigma lengths differ");
    let distances: Vec<f64> = mu_star_max
        .iter()
        .zip(sigma_max)
        .map(|(m, s)| m.hypot(*s))
        .collect();
    let largest = distances.iter().copied().fold(0.0, f64::max);
    if largest == 0.0 {
        return Ok(Screening {
            influential: vec![],
            distances,
            warning: Some("every input has zero Morris distance; nothing is influential".into()),
        });
    }
    let influential = distances
        .iter()
        .enumerate()
        .filter(|(_, &d)| d >= fraction * largest)
        .map(|(i, _)| i)
        .collect();
    Ok(Screening {
        influential,
        distances,
        warning: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::Marginal;
    use proptest::prelude::*;

    fn unit_prior(p: usize) -> PriorSpec {
        PriorSpec::new(
            (0..p)
                .map(|i| (format!("x{i}"), Marginal::Uniform { a: 0.0, b: 1.0 }))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn two_inputs_fine_grid() {
        let cfg = TrajectoryConfig { r: 1, levels: 101, jump: 1, seed: 3, ..Default::default() };
        let t = &build_trajectories(2, &cfg).unwrap()[0];
        assert_eq!(t.points.len(), 3);
        let mut seen = t.perturbed_index.clone();
        seen.sort();
        assert_eq!(seen, vec![0, 1]);
        for (step, &i) in t.perturbed_index.iter().enumerate() {
            let d = t.points[step + 1][i] - t.points[step][i];
            assert!((d.abs() - 0.01).abs() < 1e-12);
        }
    }

    #[test]
    fn two_level_grid_forces_endpoints() {
        let cfg = TrajectoryConfig { r: 1, levels: 2, jump: 1, seed: 11, ..Default::default() };
        let t = &build_trajectories(1, &cfg).unwrap()[0];
        let mut xs = vec![t.points[0][0], t.points[1][0]];
        xs.sort_by(f64::total_cmp);
        assert_eq!(xs, vec![0.0, 1.0]);
    }

    #[test]
    fn point_count() {
        let cfg = TrajectoryConfig { r: 100, levels: 101, jump: 1, seed: 5, ..Default::default() };
        let ts = build_trajectories(3, &cfg).unwrap();
        assert_eq!(ts.len(), 100);
        assert_eq!(ts.iter().map(|t| t.points.len()).sum::<usize>(), 400);
    }

    #[test]
    fn infeasible_middle_levels_are_avoided() {
        // With d = 4 and c = 3 only the end levels admit a jump.
        let cfg = TrajectoryConfig { r: 50, levels: 4, jump: 3, seed: 2, ..Default::default() };
        for t in build_trajectories(2, &cfg).unwrap() {
            for x in &t.points[0] {
                assert!(*x == 0.0 || *x == 1.0);
            }
        }
    }

    #[test]
    fn elementary_effect_examples() {
        let f = |x: &[f64]| 2.0 * x[0] + 3.0 * x[1];
        let base = [0.3, 0.6];
        assert_eq!(elementary_effect(f(&[0.31, 0.6]), f(&base), 0.01).round(), 2.0);
        assert!((elementary_effect(f(&[0.31, 0.6]), f(&base), 0.01) - 2.0).abs() < 1e-10);
        assert_eq!(elementary_effect(4.0, 4.0, -0.2), 0.0);
        assert!((elementary_effect(0.36, 0.25, 0.1) - 1.1).abs() < 1e-12);
    }

    #[test]
    fn statistics_examples() {
        let s = morris_statistics(&[vec![2.0, 2.0, 2.0], vec![1.0, -1.0], vec![1.0, 2.0, 3.0]]);
        assert_eq!((s.mu[0], s.mu_star[0], s.sigma[0]), (2.0, 2.0, Some(0.0)));
        assert_eq!((s.mu[1], s.mu_star[1]), (0.0, 1.0));
        assert!((s.sigma[1].unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!((s.mu[2], s.mu_star[2], s.sigma[2]), (2.0, 2.0, Some(1.0)));
    }

    #[test]
    fn single_sample_sigma_absent() {
        let s = morris_statistics(&[vec![3.0]]);
        assert_eq!(s.sigma[0], None);
        assert_eq!(s.mu_star[0], 3.0);
    }

    #[test]
    fn screening_thresholds() {
        let d = [10.0, 9.0, 0.1];
        let zeros = [0.0; 3];
        assert_eq!(screen(&d, &zeros, 0.005).unwrap().influential, vec![0, 1, 2]);
        assert_eq!(screen(&d, &zeros, 0.05).unwrap().influential, vec![0, 1]);
        assert_eq!(screen(&d, &zeros, 0.5).unwrap().influential, vec![0, 1]);
        let empty = screen(&zeros, &zeros, 0.05).unwrap();
        assert!(empty.influential.is_empty() && empty.warning.is_some());
        assert!(screen(&d, &zeros, 1.0).is_err());
    }

    #[test]
    fn single_driver_is_only_influential_input() {
        let prior = unit_prior(3);
        let cfg = TrajectoryConfig { r: 20, levels: 11, jump: 2, seed: 9, ..Default::default() };
        let res = run_morris(&prior, vec!["y".into()], &cfg, |x| Ok(vec![x[1].powi(3)])).unwrap();
        let (m, s) = res.maxima();
        for fraction in [0.01, 0.5, 0.99] {
            assert_eq!(screen(&m, &s, fraction).unwrap().influential, vec![1]);
        }
    }

    #[test]
    fn csv_layout() {
        let res = MorrisResult {
            input_names: vec!["a".into()],
            output_names: vec!["y".into()],
            stats: vec![morris_statistics(&[vec![1.0]])],
            warnings: vec![],
        };
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "input,y_mu,y_mu_star,y_sigma\na,1,1,\n");
    }

    proptest! {
        #[test]
        fn trajectories_stay_on_grid(p in 1usize..6, levels in 2usize..30, seed in any::<u64>(), jump_frac in 0.0f64..1.0) {
            let jump = 1 + ((levels - 2) as f64 * jump_frac) as usize;
            let cfg = TrajectoryConfig { r: 7, levels, jump, seed, ..Default::default() };
            let delta = cfg.delta();
            for t in build_trajectories(p, &cfg).unwrap() {
                let mut seen = t.perturbed_index.clone();
                seen.sort();
                prop_assert_eq!(seen, (0..p).collect::<Vec<_>>());
                for point in &t.points {
                    for &x in point {
                        prop_assert!((0.0..=1.0).contains(&x));
                        let k = x * (levels - 1) as f64;
                        prop_assert!((k - k.round()).abs() < 1e-9);
                    }
                }
                for (s, &i) in t.perturbed_index.iter().enumerate() {
                    for j in 0..p {
                        let d = t.points[s + 1][j] - t.points[s][j];
                        if j == i {
                            prop_assert!((d - t.signs[s] * delta).abs() < 1e-12);
                        } else {
                            prop_assert_eq!(d, 0.0);
                        }
                    }
                }
            }
        }

        #[test]
        fn mu_star_bounds_mu(samples in prop::collection::vec(-10.0f64..10.0, 1..30)) {
            let s = morris_statistics(&[samples.clone()]);
            prop_assert!(s.mu_star[0] + 1e-12 >= s.mu[0].abs());
            let same_sign = samples.iter().all(|&e| e >= 0.0) || samples.iter().all(|&e| e <= 0.0);
            if same_sign {
                prop_assert!((s.mu_star[0] - s.mu[0].abs()).abs() < 1e-9);
            }
        }
    }
}
