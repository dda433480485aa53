//! Stage functions wiring the modules into the end-to-end workflow, plus the
//! run manifest written next to every output set.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bma::{bma_posterior, mixture_sample, MixturePrior};
use crate::calibration::{
    clean_chains, write_ensemble, write_json, CalibrationTarget, ChainEnsemble, LikelihoodMode, NamedMarginal,
    PosteriorSamples, PriorSpec,
};
use crate::config::RunConfig;
use crate::divergence::{select_optimal_w, sweep_w, w_grid, write_contour_csv, Criterion, Sweep};
use crate::error::{ensure, Error, Result};
use crate::forward_model::{
    extract_at_depth, extract_thermocouples, interp_clamped, ResponseModel, Scenario, SolverModel, TCProfile,
};
use crate::io::{ensure_dir, ingest_tc_csv, write_tc_csv, write_with};
use crate::predictive::{
    map_trajectory, normalized_overlay, propagate, write_intervals_csv, write_profiles_csv, OverlayReport,
    PredictionInterval, PredictiveEnsemble, ScenarioProfiles, OVERLAY_THRESHOLD,
};
use crate::seed::stage_seed;
use crate::sensitivity::{run_morris, screen, MorrisResult, Screening};
use crate::surrogate::{fit_field, latin_hypercube, sample_runs, uniform_knots, FieldSurrogate};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Ground,
    Flight,
}

impl Which {
    pub fn name(self) -> &'static str {
        match self {
            Which::Ground => "ground",
            Which::Flight => "flight",
        }
    }

    pub fn scenario(self, cfg: &RunConfig) -> &Scenario {
        match self {
            Which::Ground => &cfg.ground,
            Which::Flight => &cfg.flight,
        }
    }

    pub fn truth(self, cfg: &RunConfig) -> &BTreeMap<String, f64> {
        match self {
            Which::Ground => &cfg.synthetic.ground_truth,
            Which::Flight => &cfg.synthetic.flight_truth,
        }
    }

    pub fn data_path(self, cfg: &RunConfig) -> Option<&PathBuf> {
        match self {
            Which::Ground => cfg.data.ground.as_ref(),
            Which::Flight => cfg.data.flight.as_ref(),
        }
    }
}

/// Provenance record written as `manifest.json` in every output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub global_seed: u64,
    pub stage_seeds: BTreeMap<String, u64>,
    pub modules: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        let modules = [
            "forward_model",
            "sensitivity",
            "surrogate",
            "calibration",
            "bma",
            "predictive",
            "divergence",
        ]
        .iter()
        .map(|m| (m.to_string(), VERSION.to_string()))
        .collect();
        Manifest {
            tool: "charuq".into(),
            version: VERSION.into(),
            command: command.into(),
            config_hash: cfg.hash(),
            global_seed: cfg.seed,
            stage_seeds: BTreeMap::new(),
            modules,
            outputs: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// Derives and records the seed of `stage`.
    pub fn seed(&mut self, stage: &str) -> u64 {
        let s = stage_seed(self.global_seed, stage);
        self.stage_seeds.insert(stage.to_string(), s);
        s
    }

    pub fn output(&mut self, out: &Path, path: &Path) {
        let rel = path.strip_prefix(out).unwrap_or(path);
        self.outputs.push(rel.to_string_lossy().replace('\\', "/"));
    }

    pub fn write(&mut self, out: &Path) -> Result<()> {
        self.outputs.sort();
        self.outputs.dedup();
        write_json(&out.join("manifest.json"), self)
    }
}

pub fn solver_model(cfg: &RunConfig, which: Which, names: Vec<String>, overrides: &BTreeMap<String, f64>) -> Result<SolverModel> {
    SolverModel::new(which.scenario(cfg).clone(), cfg.grid, cfg.material_with(overrides)?, names)
}

/// Solver response at the configured truth, sampled every `synthetic.spacing`.
pub fn simulate(cfg: &RunConfig, which: Which) -> Result<Vec<TCProfile>> {
    let model = solver_model(cfg, which, Vec::new(), which.truth(cfg))?;
    let times = uniform_knots(which.scenario(cfg).duration, cfg.synthetic.spacing)?;
    Ok(model.with_output_times(times).evaluate(&[])?)
}

/// Simulated response times independent log-normal noise of sd
/// `synthetic.sigma`; thermocouple `k` draws from stream `k`.
pub fn synthesize(cfg: &RunConfig, which: Which, seed_value: u64) -> Result<Vec<TCProfile>> {
    let mut profiles = simulate(cfg, which)?;
    for (k, p) in profiles.iter_mut().enumerate() {
        let mut rng = crate::seed::stream_rng(seed_value, k as u64);
        for v in &mut p.values {
            let z: f64 = rng.sample(StandardNormal);
            *v *= (cfg.synthetic.sigma * z).exp();
        }
    }
    Ok(profiles)
}

/// Configured measurements if present, synthetic ones otherwise.
pub fn load_or_synthesize(cfg: &RunConfig, which: Which, manifest: &mut Manifest) -> Result<Vec<TCProfile>> {
    let depths = which.scenario(cfg).tc_depths_from_surface();
    match which.data_path(cfg) {
        Some(path) => {
            let data = ingest_tc_csv(path, Some(&depths))?;
            let labels: Vec<&String> = data.iter().map(|p| &p.label).collect();
            let expected: Vec<&String> = which.scenario(cfg).tc_labels.iter().collect();
            ensure!(
                labels == expected,
                "{}: columns {labels:?} do not match thermocouples {expected:?}",
                path.display()
            );
            Ok(data)
        }
        None => {
            let seed_value = manifest.seed(&format!("synthesize-{}", which.name()));
            synthesize(cfg, which, seed_value)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MorrisOutcome {
    pub result: MorrisResult,
    pub screening: Screening,
    pub influential: Vec<String>,
}

/// Elementary-effects screening of the ground solver over the screening
/// priors; outputs are every thermocouple at every Morris knot.
pub fn morris_stage(cfg: &RunConfig, seed_value: u64) -> Result<MorrisOutcome> {
    let priors = &cfg.screening_priors;
    let scenario = &cfg.ground;
    let knots = uniform_knots(scenario.duration, cfg.morris.knot_spacing)?;
    let model = solver_model(cfg, Which::Ground, priors.names(), &BTreeMap::new())?.with_output_times(knots.clone());
    let names: Vec<String> = scenario
        .tc_labels
        .iter()
        .flat_map(|l| knots.iter().map(move |t| format!("{l}@{t}")))
        .collect();
    let traj = crate::sensitivity::TrajectoryConfig {
        seed: seed_value,
        ..cfg.morris.trajectories
    };
    let result = run_morris(priors, names, &traj, |theta| {
        Ok(model.evaluate(theta)?.into_iter().flat_map(|p| p.values).collect())
    })?;
    let (mu_star_max, sigma_max) = result.maxima();
    let screening = screen(&mu_star_max, &sigma_max, cfg.morris.screen_fraction)?;
    let influential = screening.influential.iter().map(|&i| result.input_names[i].clone()).collect();
    Ok(MorrisOutcome {
        result,
        screening,
        influential,
    })
}

/// Frozen-time surrogate of one scenario over the calibration priors.
pub fn surrogate_stage(cfg: &RunConfig, which: Which, seed_value: u64) -> Result<FieldSurrogate> {
    let priors = &cfg.priors;
    let model = solver_model(cfg, which, priors.names(), &BTreeMap::new())?;
    let knots = uniform_knots(which.scenario(cfg).duration, cfg.surrogate.knot_spacing)?;
    let samples = latin_hypercube(priors, cfg.surrogate.n_runs, seed_value);
    let runs = sample_runs(&model, &samples)?;
    fit_field(&samples, &runs, priors, &knots, &cfg.surrogate.fit)
}

pub struct Calibration {
    pub ensemble: ChainEnsemble,
    pub posterior: PosteriorSamples,
}

/// DRAM calibration of `model` against `data`; returns the raw chains and
/// the cleaned pool.
pub fn calibrate_stage(cfg: &RunConfig, model: &dyn ResponseModel, data: Vec<TCProfile>, seed_value: u64) -> Result<Calibration> {
    let target = CalibrationTarget::new(model, cfg.priors.clone(), cfg.likelihood.clone(), data)?;
    let mut ens_cfg = cfg.mcmc.ensemble.clone();
    ens_cfg.chain.seed = seed_value;
    let ensemble = target.calibrate(&ens_cfg)?;
    let posterior = clean_chains(&ensemble, cfg.mcmc.burn, cfg.mcmc.thin)?;
    Ok(Calibration { ensemble, posterior })
}

pub fn write_calibration(cal: &Calibration, dir: &Path, manifest: &mut Manifest, out: &Path) -> Result<()> {
    let chains = dir.join("chains");
    ensure_dir(&chains)?;
    write_ensemble(&cal.ensemble, &chains)?;
    cal.posterior.write(dir, "posterior")?;
    for f in ["posterior.csv", "posterior.json"] {
        manifest.output(out, &dir.join(f));
    }
    for k in 0..cal.ensemble.chains.len() {
        manifest.output(out, &chains.join(format!("chain_{k}.csv")));
    }
    manifest.output(out, &chains.join("chains.json"));
    Ok(())
}

/// Resamples `n` parameter vectors from `posterior` and propagates them.
/// With `emulator`, each draw carries its own `sigma_em` as log-normal noise.
pub fn propagate_stage(
    posterior: &PosteriorSamples,
    model: &dyn ResponseModel,
    emulator: bool,
    n: usize,
    seed_value: u64,
) -> Result<PredictiveEnsemble> {
    let draws = bma_posterior(&[1.0], &[&posterior.samples], n, stage_seed(seed_value, "resample"))?;
    let resampled = PosteriorSamples::from_samples(posterior.names.clone(), draws, vec![0.0; n], &posterior.source)?;
    propagate_samples(&resampled, model, emulator, seed_value)
}

fn propagate_samples(samples: &PosteriorSamples, model: &dyn ResponseModel, emulator: bool, seed_value: u64) -> Result<PredictiveEnsemble> {
    let theta = samples.select(model.input_names())?;
    let sigma = if emulator {
        Some(samples.column("sigma_em").map_err(|_| {
            Error::InvalidArgument("emulator propagation needs a 'sigma_em' column (emulator likelihood mode)".into())
        })?)
    } else {
        None
    };
    let knots = model.evaluate(&theta[0])?[0].times.clone();
    let mut ens = propagate(&theta, model, sigma.as_deref(), &knots, stage_seed(seed_value, "noise"))?;
    ens.provenance = samples.source.clone();
    Ok(ens)
}

/// Model run at the posterior MAP point, written as a TC CSV.
pub fn map_trajectory_csv(posterior: &PosteriorSamples, model: &dyn ResponseModel, path: &Path) -> Result<()> {
    let map = map_trajectory(posterior, model)?;
    write_with(path, |w| write_profiles_csv(&map, w))
}

/// Fraction of data points inside the ensemble interval (interval bounds are
/// interpolated linearly to the data times).
pub fn coverage(ens: &PredictiveEnsemble, interval: &PredictionInterval, data: &[TCProfile]) -> Result<f64> {
    ensure!(data.len() == ens.labels.len(), "{} data profiles for {} thermocouples", data.len(), ens.labels.len());
    let mut inside = 0usize;
    let mut total = 0usize;
    for (tc, d) in data.iter().enumerate() {
        for (t, y) in d.times.iter().zip(&d.values) {
            let lo = interp_clamped(&ens.knots, &interval.lo[tc], *t);
            let hi = interp_clamped(&ens.knots, &interval.hi[tc], *t);
            total += 1;
            if lo <= *y && *y <= hi {
                inside += 1;
            }
        }
    }
    ensure!(total > 0, "no data points");
    Ok(inside as f64 / total as f64)
}

/// Fraction of (TC, knot) points where `outer` contains `inner`.
pub fn containment(outer: &PredictionInterval, inner: &PredictionInterval) -> f64 {
    let mut hit = 0usize;
    let mut total = 0usize;
    for (tc, (olo, ohi)) in outer.lo.iter().zip(&outer.hi).enumerate() {
        for k in 0..olo.len() {
            total += 1;
            if olo[k] <= inner.lo[tc][k] && ohi[k] >= inner.hi[tc][k] {
                hit += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// Writes ensemble CSVs (one per TC), the interval table and returns the
/// intervals at every configured level.
pub fn write_predictive(
    ens: &PredictiveEnsemble,
    levels: &[f64],
    dir: &Path,
    manifest: &mut Manifest,
    out: &Path,
) -> Result<Vec<PredictionInterval>> {
    ensure_dir(dir)?;
    for (tc, label) in ens.labels.iter().enumerate() {
        let path = dir.join(format!("ensemble_{label}.csv"));
        write_with(&path, |w| ens.write_tc_csv(tc, w))?;
        manifest.output(out, &path);
    }
    let intervals = levels.iter().map(|l| ens.intervals(*l)).collect::<Result<Vec<_>>>()?;
    let path = dir.join("intervals.csv");
    write_with(&path, |w| write_intervals_csv(ens, &intervals, w))?;
    manifest.output(out, &path);
    Ok(intervals)
}

/// The prior standing for the non-updated model: calibration priors plus the
/// sigma prior for every likelihood sigma.
pub fn noninformative_prior(cfg: &RunConfig, sigma_names: &[String]) -> Result<PriorSpec> {
    let sigmas = PriorSpec {
        params: sigma_names
            .iter()
            .map(|n| NamedMarginal {
                name: n.clone(),
                marginal: cfg.likelihood.sigma_prior,
            })
            .collect(),
    };
    cfg.priors.concat(&sigmas)
}

/// Mixture-prior predictive ensembles swept over `w`, compared with
/// `reference`.
pub fn sweep_stage(
    cfg: &RunConfig,
    informative: &PosteriorSamples,
    model: &dyn ResponseModel,
    reference: &PredictiveEnsemble,
    seed_value: u64,
) -> Result<Sweep> {
    let sigma_names: Vec<String> = informative.names[cfg.priors.dim()..].to_vec();
    let prior = noninformative_prior(cfg, &sigma_names)?;
    let names = prior.names();
    let samples = informative.select(&names)?;
    let informative = PosteriorSamples::from_samples(names.clone(), samples, informative.log_posterior.clone(), &informative.source)?;
    let emulator = cfg.likelihood.mode == LikelihoodMode::Emulator;
    let ws = w_grid(cfg.sweep.dw)?;
    let build = |w: f64| {
        let mix = MixturePrior {
            w,
            informative: informative.clone(),
            noninformative: prior.clone(),
        };
        let row_seed = stage_seed(seed_value, &format!("w={w}"));
        let draws = mixture_sample(&mix, cfg.sweep.n_samples, row_seed)?;
        let n = draws.len();
        let set = PosteriorSamples::from_samples(names.clone(), draws, vec![0.0; n], &format!("mixture-w{w}"))?;
        propagate_samples(&set, model, emulator, row_seed)
    };
    sweep_w(&ws, build, reference, &cfg.sweep.grid, cfg.sweep.truncation_level)
}

/// Mixture predictive ensemble at one weight, drawn exactly as in the sweep.
pub fn mixture_ensemble(
    cfg: &RunConfig,
    informative: &PosteriorSamples,
    model: &dyn ResponseModel,
    w: f64,
    seed_value: u64,
) -> Result<PredictiveEnsemble> {
    let sigma_names: Vec<String> = informative.names[cfg.priors.dim()..].to_vec();
    let prior = noninformative_prior(cfg, &sigma_names)?;
    let names = prior.names();
    let samples = informative.select(&names)?;
    let mix = MixturePrior {
        w,
        informative: PosteriorSamples::from_samples(names.clone(), samples, informative.log_posterior.clone(), &informative.source)?,
        noninformative: prior,
    };
    let row_seed = stage_seed(seed_value, &format!("w={w}"));
    let draws = mixture_sample(&mix, cfg.sweep.n_samples, row_seed)?;
    let n = draws.len();
    let set = PosteriorSamples::from_samples(names, draws, vec![0.0; n], &format!("mixture-w{w}"))?;
    propagate_samples(&set, model, cfg.likelihood.mode == LikelihoodMode::Emulator, row_seed)
}

pub fn write_sweep(sweep: &Sweep, dir: &Path, manifest: &mut Manifest, out: &Path) -> Result<SelectReport> {
    ensure_dir(dir)?;
    let table = dir.join("divergence_table.csv");
    write_with(&table, |w| sweep.table.write_csv(w))?;
    let contour = dir.join("contour.csv");
    write_with(&contour, |w| write_contour_csv(sweep, w))?;
    for (row, field) in sweep.table.rows.iter().zip(&sweep.fields) {
        if let Some(pw) = field {
            let path = dir.join(format!("pointwise_w{:.2}.csv", row.w));
            write_with(&path, |w| pw.write_csv(w))?;
            manifest.output(out, &path);
        }
    }
    let report = select_report(&sweep.table)?;
    let select = dir.join("select_w.json");
    write_json(&select, &report)?;
    for p in [&table, &contour, &select] {
        manifest.output(out, p);
    }
    manifest.warnings.extend(sweep.warnings.iter().cloned());
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectReport {
    pub jeffreys: f64,
    pub backward_kl: f64,
    pub forward_kl: f64,
    pub rows: usize,
}

pub fn select_report(table: &crate::divergence::DivergenceTable) -> Result<SelectReport> {
    Ok(SelectReport {
        jeffreys: select_optimal_w(table, Criterion::Jeffreys)?,
        backward_kl: select_optimal_w(table, Criterion::BackwardKl)?,
        forward_kl: select_optimal_w(table, Criterion::ForwardKl)?,
        rows: table.rows.len(),
    })
}

/// Surface and thermocouple histories of one scenario at its truth values.
pub fn scenario_profiles(cfg: &RunConfig, which: Which) -> Result<ScenarioProfiles> {
    let model = solver_model(cfg, which, Vec::new(), which.truth(cfg))?;
    let field = model.field(&[])?;
    Ok(ScenarioProfiles {
        name: which.name().into(),
        surface: extract_at_depth(&field, "surface", 0.0)?,
        tcs: extract_thermocouples(&field, which.scenario(cfg))?,
    })
}

pub fn overlay_stage(cfg: &RunConfig) -> Result<OverlayReport> {
    normalized_overlay(
        &scenario_profiles(cfg, Which::Ground)?,
        &scenario_profiles(cfg, Which::Flight)?,
        OVERLAY_THRESHOLD,
    )
}

pub fn write_overlay(report: &OverlayReport, dir: &Path, manifest: &mut Manifest, out: &Path) -> Result<()> {
    ensure_dir(dir)?;
    let json = dir.join("overlay.json");
    write_json(&json, report)?;
    let csv = dir.join("overlay.csv");
    write_with(&csv, |w| report.write_csv(w))?;
    manifest.output(out, &json);
    manifest.output(out, &csv);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSummary {
    pub n_models: usize,
    pub worst_loo: f64,
    pub median_loo: f64,
    pub failed_knots: usize,
}

impl SurrogateSummary {
    pub fn of(s: &FieldSurrogate) -> Self {
        let mut loo: Vec<f64> = s.models.iter().flatten().map(|m| m.loo_error).collect();
        loo.sort_by(f64::total_cmp);
        SurrogateSummary {
            n_models: s.n_models(),
            worst_loo: s.worst_loo(),
            median_loo: loo.get(loo.len() / 2).copied().unwrap_or(f64::NAN),
            failed_knots: s.failures.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub names: Vec<String>,
    pub n_samples: usize,
    pub acceptance_rates: Vec<f64>,
    pub posterior_mean: Vec<f64>,
    pub map_point: Vec<f64>,
}

impl CalibrationSummary {
    pub fn of(cal: &Calibration) -> Self {
        let p = &cal.posterior;
        let n = p.len() as f64;
        let posterior_mean = (0..p.dim()).map(|j| p.samples.iter().map(|s| s[j]).sum::<f64>() / n).collect();
        CalibrationSummary {
            names: p.names.clone(),
            n_samples: p.len(),
            acceptance_rates: cal.ensemble.acceptance_rates(),
            posterior_mean,
            map_point: p.map_point.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub variant: String,
    pub level: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config_hash: String,
    pub influential_inputs: Option<Vec<String>>,
    pub ground_surrogate: SurrogateSummary,
    pub flight_surrogate: SurrogateSummary,
    pub ground_calibration: CalibrationSummary,
    pub flight_calibration: CalibrationSummary,
    /// Coverage of the flight data by the ground-calibrated predictions.
    pub flight_coverage: Vec<CoverageRow>,
    /// Emulator minus parametric-only coverage at the 95% level.
    pub coverage_gap_95: f64,
    pub divergence_rows: Vec<crate::divergence::DivergenceRow>,
    pub optimal_w: SelectReport,
    /// Share of (TC, knot) points where the selected mixture's 99% interval
    /// contains the flight reference's 99% interval.
    pub containment_99: f64,
    pub overlay_verdict: bool,
    pub overlay_violations: Vec<String>,
    pub warnings: Vec<String>,
}

pub struct PipelineOptions {
    pub run_morris: bool,
}

/// Full flow: (screening) -> surrogates -> ground and flight calibration ->
/// propagation of the ground posterior to flight with and without the
/// emulator -> mixture sweep against the flight posterior predictive ->
/// interpolativity check -> report.
pub fn run_pipeline(cfg: &RunConfig, out: &Path, opts: &PipelineOptions) -> Result<PipelineReport> {
    cfg.validate()?;
    ensure!(
        cfg.likelihood.mode == LikelihoodMode::Emulator,
        "the pipeline propagates emulator noise and needs the emulator likelihood mode"
    );
    ensure_dir(out)?;
    let mut m = Manifest::new("pipeline", cfg);

    let data_dir = out.join("data");
    ensure_dir(&data_dir)?;
    let ground_data = load_or_synthesize(cfg, Which::Ground, &mut m)?;
    let flight_data = load_or_synthesize(cfg, Which::Flight, &mut m)?;
    for (name, d) in [("ground", &ground_data), ("flight", &flight_data)] {
        let p = data_dir.join(format!("{name}.csv"));
        write_tc_csv(&p, d)?;
        m.output(out, &p);
    }

    let influential_inputs = if opts.run_morris {
        let s = m.seed("morris");
        let outcome = morris_stage(cfg, s)?;
        let dir = out.join("morris");
        write_morris(&outcome, &dir, &mut m, out)?;
        Some(outcome.influential)
    } else {
        None
    };

    let surr_dir = out.join("surrogate");
    ensure_dir(&surr_dir)?;
    let mut surrogates = Vec::new();
    for which in [Which::Ground, Which::Flight] {
        let s = m.seed(&format!("surrogate-{}", which.name()));
        let surrogate = surrogate_stage(cfg, which, s)?;
        let p = surr_dir.join(format!("{}.json", which.name()));
        surrogate.write_json(&p)?;
        m.output(out, &p);
        for f in &surrogate.failures {
            m.warnings.push(format!(
                "{} surrogate: knot {} of {} fell back to a constant: {}",
                which.name(),
                f.knot,
                surrogate.labels[f.tc],
                f.message
            ));
        }
        surrogates.push(surrogate);
    }
    let (ground_surrogate, flight_surrogate) = (&surrogates[0], &surrogates[1]);

    let seed_g = m.seed("calibrate-ground");
    let ground = calibrate_stage(cfg, ground_surrogate, ground_data, seed_g)?;
    write_calibration(&ground, &out.join("calibrate_ground"), &mut m, out)?;
    let seed_f = m.seed("calibrate-flight");
    let flight = calibrate_stage(cfg, flight_surrogate, flight_data.clone(), seed_f)?;
    write_calibration(&flight, &out.join("calibrate_flight"), &mut m, out)?;

    let seed_p = m.seed("propagate");
    let n = cfg.propagation.n_samples;
    let levels = &cfg.propagation.levels;
    let parametric = propagate_stage(&ground.posterior, flight_surrogate, false, n, seed_p)?;
    let emulator = propagate_stage(&ground.posterior, flight_surrogate, true, n, seed_p)?;
    let pi_param = write_predictive(&parametric, levels, &out.join("propagate_parametric"), &mut m, out)?;
    let pi_emu = write_predictive(&emulator, levels, &out.join("propagate_emulator"), &mut m, out)?;
    let map_path = out.join("propagate_emulator").join("map.csv");
    map_trajectory_csv(&ground.posterior, flight_surrogate, &map_path)?;
    m.output(out, &map_path);

    let mut flight_coverage = Vec::new();
    for (variant, ens, pis) in [("parametric", &parametric, &pi_param), ("emulator", &emulator, &pi_emu)] {
        for pi in pis {
            flight_coverage.push(CoverageRow {
                variant: variant.into(),
                level: pi.level,
                coverage: coverage(ens, pi, &flight_data)?,
            });
        }
    }
    let at95 = |v: &str| -> Result<f64> {
        let p = parametric.intervals(0.95)?;
        let e = emulator.intervals(0.95)?;
        coverage(if v == "p" { &parametric } else { &emulator }, if v == "p" { &p } else { &e }, &flight_data)
    };
    let coverage_gap_95 = at95("e")? - at95("p")?;

    let seed_r = m.seed("reference");
    let reference = propagate_stage(&flight.posterior, flight_surrogate, true, cfg.sweep.n_samples, seed_r)?;
    write_predictive(&reference, levels, &out.join("reference"), &mut m, out)?;

    let seed_s = m.seed("sweep");
    let sweep = sweep_stage(cfg, &ground.posterior, flight_surrogate, &reference, seed_s)?;
    let optimal_w = write_sweep(&sweep, &out.join("sweep"), &mut m, out)?;
    let w_star = match cfg.sweep.criterion {
        Criterion::Jeffreys => optimal_w.jeffreys,
        Criterion::BackwardKl => optimal_w.backward_kl,
        Criterion::ForwardKl => optimal_w.forward_kl,
    };
    let best = mixture_ensemble(cfg, &ground.posterior, flight_surrogate, w_star, seed_s)?;
    write_predictive(&best, levels, &out.join("mixture_optimal"), &mut m, out)?;
    let containment_99 = containment(&best.intervals(0.99)?, &reference.intervals(0.99)?);

    let overlay = overlay_stage(cfg)?;
    write_overlay(&overlay, &out.join("overlay"), &mut m, out)?;

    let report = PipelineReport {
        config_hash: m.config_hash.clone(),
        influential_inputs,
        ground_surrogate: SurrogateSummary::of(ground_surrogate),
        flight_surrogate: SurrogateSummary::of(flight_surrogate),
        ground_calibration: CalibrationSummary::of(&ground),
        flight_calibration: CalibrationSummary::of(&flight),
        flight_coverage,
        coverage_gap_95,
        divergence_rows: sweep.table.rows.clone(),
        optimal_w,
        containment_99,
        overlay_verdict: overlay.verdict,
        overlay_violations: overlay.violations.clone(),
        warnings: m.warnings.clone(),
    };
    let report_path = out.join("report.json");
    write_json(&report_path, &report)?;
    m.output(out, &report_path);
    m.write(out)?;
    Ok(report)
}

pub fn write_morris(outcome: &MorrisOutcome, dir: &Path, manifest: &mut Manifest, out: &Path) -> Result<()> {
    ensure_dir(dir)?;
    let stats = dir.join("morris_stats.csv");
    write_with(&stats, |w| outcome.result.write_csv(w))?;
    let plot = dir.join("morris_plot.csv");
    write_with(&plot, |w| outcome.result.write_plot_csv(w))?;
    let screening = dir.join("screening.json");
    write_json(&screening, &(&outcome.screening, &outcome.influential, &outcome.result.input_names))?;
    for p in [&stats, &plot, &screening] {
        manifest.output(out, p);
    }
    manifest.warnings.extend(outcome.result.warnings.iter().cloned());
    Ok(())
}
