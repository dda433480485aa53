use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use charuq::calibration::{LikelihoodMode, PosteriorSamples};
use charuq::config::RunConfig;
use charuq::divergence::{Criterion, DivergenceTable};
use charuq::forward_model::TCProfile;
use charuq::io::{ensure_dir, ingest_tc_csv, write_json, write_tc_csv, write_with};
use charuq::pipeline::{
    self, calibrate_stage, load_or_synthesize, map_trajectory_csv, mixture_ensemble, morris_stage, overlay_stage,
    propagate_stage, select_report, surrogate_stage, sweep_stage, write_calibration, write_morris, write_overlay,
    write_predictive, write_sweep, CalibrationSummary, Manifest, PipelineOptions, SurrogateSummary, Which,
};
use charuq::surrogate::FieldSurrogate;
use charuq::{Error, Result};

#[derive(Parser)]
#[command(name = "charuq", version, about = "Charring-ablator calibration and extrapolation pipeline")]
struct Cli {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Ground,
    Flight,
}

impl From<ScenarioArg> for Which {
    fn from(s: ScenarioArg) -> Which {
        match s {
            ScenarioArg::Ground => Which::Ground,
            ScenarioArg::Flight => Which::Flight,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Jeffreys,
    BackwardKl,
    ForwardKl,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Criterion {
        match c {
            CriterionArg::Jeffreys => Criterion::Jeffreys,
            CriterionArg::BackwardKl => Criterion::BackwardKl,
            CriterionArg::ForwardKl => Criterion::ForwardKl,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solver run at the configured truth values; writes TC and field CSVs.
    Simulate {
        #[arg(long, value_enum, default_value = "ground")]
        scenario: ScenarioArg,
    },
    /// Simulated thermocouples with multiplicative log-normal noise.
    SynthesizeData {
        #[arg(long, value_enum, default_value = "ground")]
        scenario: ScenarioArg,
        /// Overrides the configured log-scale noise sd.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Elementary-effects screening of the ground solver.
    Morris,
    /// Fits the frozen-time surrogate of one scenario.
    Pce {
        #[arg(long, value_enum, default_value = "ground")]
        scenario: ScenarioArg,
    },
    /// DRAM calibration against thermocouple data.
    Calibrate {
        #[arg(long, value_enum, default_value = "ground")]
        scenario: ScenarioArg,
        /// Thermocouple CSV; falls back to the configured or synthetic data.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Surrogate JSON from `pce`; fitted on the fly when omitted.
        #[arg(long)]
        surrogate: Option<PathBuf>,
        /// Calibrate against the solver itself instead of a surrogate.
        #[arg(long, conflicts_with = "surrogate")]
        solver: bool,
    },
    /// Propagates posterior (or mixture) samples through a scenario surrogate.
    Propagate {
        /// Posterior CSV written by `calibrate` (its JSON sits next to it).
        #[arg(long)]
        posterior: PathBuf,
        #[arg(long, value_enum, default_value = "flight")]
        scenario: ScenarioArg,
        #[arg(long)]
        surrogate: Option<PathBuf>,
        /// Omit the emulator noise.
        #[arg(long)]
        parametric_only: bool,
        /// Draw from the mixture prior with this weight on the posterior.
        #[arg(long)]
        mixture_w: Option<f64>,
    },
    /// Normalized-time interpolativity check between ground and flight.
    Overlay,
    /// Divergence table of mixture predictions against a reference posterior.
    SweepW {
        /// Posterior CSV of the informative component.
        #[arg(long)]
        informative: PathBuf,
        /// Posterior CSV whose predictive ensemble is the reference.
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, value_enum, default_value = "flight")]
        scenario: ScenarioArg,
        #[arg(long)]
        surrogate: Option<PathBuf>,
    },
    /// Optimal weight from a divergence table CSV.
    SelectW {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, value_enum)]
        criterion: Option<CriterionArg>,
    },
    /// Full flow from data to the mixture-weight report.
    Pipeline {
        /// Skip the screening stage.
        #[arg(long)]
        skip_morris: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn split_stem(path: &Path) -> Result<(PathBuf, String)> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no file name", path.display())))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    Ok((dir, stem.to_string()))
}

fn read_posterior(path: &Path) -> Result<PosteriorSamples> {
    let (dir, stem) = split_stem(path)?;
    PosteriorSamples::read(&dir, &stem)
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{} does not exist", path.display())))
    }
}

fn surrogate_for(cfg: &RunConfig, which: Which, path: Option<&Path>, m: &mut Manifest, out: &Path) -> Result<FieldSurrogate> {
    match path {
        Some(p) => FieldSurrogate::read_json(p),
        None => {
            let seed = m.seed(&format!("surrogate-{}", which.name()));
            let s = surrogate_stage(cfg, which, seed)?;
            let p = out.join(format!("surrogate_{}.json", which.name()));
            s.write_json(&p)?;
            m.output(out, &p);
            Ok(s)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidArgument("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    let out = cli.out.as_path();
    // Input files are checked before any compute.
    match &cli.command {
        Command::Calibrate { data, surrogate, .. } => {
            for p in data.iter().chain(surrogate) {
                require_file(p)?;
            }
        }
        Command::Propagate { posterior, surrogate, mixture_w, .. } => {
            require_file(posterior)?;
            if let Some(p) = surrogate {
                require_file(p)?;
            }
            if let Some(w) = mixture_w {
                if !(0.0..=1.0).contains(w) {
                    return Err(Error::Config(format!("mixture weight {w} is outside [0, 1]")));
                }
            }
        }
        Command::SweepW {
            informative,
            reference,
            surrogate,
            ..
        } => {
            for p in [informative, reference].into_iter().chain(surrogate) {
                require_file(p)?;
            }
        }
        Command::SelectW { table, .. } => require_file(table)?,
        Command::SynthesizeData { sigma: Some(s), .. } if !(*s >= 0.0) => {
            return Err(Error::Config(format!("noise sd must be non-negative, got {s}")));
        }
        _ => {}
    }
    ensure_dir(out)?;

    let name = match &cli.command {
        Command::Simulate { .. } => "simulate",
        Command::SynthesizeData { .. } => "synthesize-data",
        Command::Morris => "morris",
        Command::Pce { .. } => "pce",
        Command::Calibrate { .. } => "calibrate",
        Command::Propagate { .. } => "propagate",
        Command::Overlay => "overlay",
        Command::SweepW { .. } => "sweep-w",
        Command::SelectW { .. } => "select-w",
        Command::Pipeline { .. } => "pipeline",
    };
    let mut m = Manifest::new(name, &cfg);

    match cli.command {
        Command::Simulate { scenario } => {
            let which = Which::from(scenario);
            let model = pipeline::solver_model(&cfg, which, Vec::new(), which.truth(&cfg))?;
            let field = model.field(&[])?;
            let tc_path = out.join(format!("{}_tc.csv", which.name()));
            write_tc_csv(&tc_path, &pipeline::simulate(&cfg, which)?)?;
            let field_path = out.join(format!("{}_field.csv", which.name()));
            write_with(&field_path, |w| field.write_csv(w))?;
            m.output(out, &tc_path);
            m.output(out, &field_path);
        }
        Command::SynthesizeData { scenario, sigma } => {
            let which = Which::from(scenario);
            let mut cfg = cfg.clone();
            if let Some(s) = sigma {
                cfg.synthetic.sigma = s;
            }
            let seed = m.seed(&format!("synthesize-{}", which.name()));
            let data = pipeline::synthesize(&cfg, which, seed)?;
            let path = out.join(format!("{}.csv", which.name()));
            write_tc_csv(&path, &data)?;
            m.output(out, &path);
        }
        Command::Morris => {
            let seed = m.seed("morris");
            let outcome = morris_stage(&cfg, seed)?;
            write_morris(&outcome, out, &mut m, out)?;
        }
        Command::Pce { scenario } => {
            let which = Which::from(scenario);
            let seed = m.seed(&format!("surrogate-{}", which.name()));
            let s = surrogate_stage(&cfg, which, seed)?;
            let path = out.join(format!("surrogate_{}.json", which.name()));
            s.write_json(&path)?;
            let loo = out.join(format!("loo_{}.json", which.name()));
            write_json(&loo, &(SurrogateSummary::of(&s), &s.failures))?;
            m.output(out, &path);
            m.output(out, &loo);
        }
        Command::Calibrate {
            scenario,
            data,
            surrogate,
            solver,
        } => {
            let which = Which::from(scenario);
            let depths = which.scenario(&cfg).tc_depths_from_surface();
            let data: Vec<TCProfile> = match data {
                Some(p) => ingest_tc_csv(&p, Some(&depths))?,
                None => load_or_synthesize(&cfg, which, &mut m)?,
            };
            let seed = m.seed(&format!("calibrate-{}", which.name()));
            let cal = if solver {
                let model = pipeline::solver_model(&cfg, which, cfg.priors.names(), &BTreeMap::new())?;
                calibrate_stage(&cfg, &model, data, seed)?
            } else {
                let s = surrogate_for(&cfg, which, surrogate.as_deref(), &mut m, out)?;
                calibrate_stage(&cfg, &s, data, seed)?
            };
            write_calibration(&cal, out, &mut m, out)?;
            let summary = out.join("calibration.json");
            write_json(&summary, &CalibrationSummary::of(&cal))?;
            m.output(out, &summary);
        }
        Command::Propagate {
            posterior,
            scenario,
            surrogate,
            parametric_only,
            mixture_w,
        } => {
            let which = Which::from(scenario);
            let post = read_posterior(&posterior)?;
            let s = surrogate_for(&cfg, which, surrogate.as_deref(), &mut m, out)?;
            let seed = m.seed("propagate");
            let ens = match mixture_w {
                Some(w) => {
                    if parametric_only || cfg.likelihood.mode != LikelihoodMode::Emulator {
                        return Err(Error::Config(
                            "mixture propagation carries the emulator noise and needs the emulator likelihood mode".into(),
                        ));
                    }
                    mixture_ensemble(&cfg, &post, &s, w, seed)?
                }
                None => propagate_stage(&post, &s, !parametric_only, cfg.propagation.n_samples, seed)?,
            };
            write_predictive(&ens, &cfg.propagation.levels, out, &mut m, out)?;
            if mixture_w.is_none() {
                let path = out.join("map.csv");
                map_trajectory_csv(&post, &s, &path)?;
                m.output(out, &path);
            }
        }
        Command::Overlay => {
            let report = overlay_stage(&cfg)?;
            write_overlay(&report, out, &mut m, out)?;
        }
        Command::SweepW {
            informative,
            reference,
            scenario,
            surrogate,
        } => {
            let which = Which::from(scenario);
            let informative = read_posterior(&informative)?;
            let reference = read_posterior(&reference)?;
            let s = surrogate_for(&cfg, which, surrogate.as_deref(), &mut m, out)?;
            let seed_r = m.seed("reference");
            let reference = propagate_stage(&reference, &s, true, cfg.sweep.n_samples, seed_r)?;
            let seed = m.seed("sweep");
            let sweep = sweep_stage(&cfg, &informative, &s, &reference, seed)?;
            write_sweep(&sweep, out, &mut m, out)?;
        }
        Command::SelectW { table, criterion } => {
            let table = DivergenceTable::read_csv(&table)?;
            let report = select_report(&table)?;
            let chosen = charuq::divergence::select_optimal_w(&table, criterion.map(Criterion::from).unwrap_or(cfg.sweep.criterion))?;
            println!("{chosen}");
            let path = out.join("select_w.json");
            write_json(&path, &report)?;
            m.output(out, &path);
        }
        Command::Pipeline { skip_morris } => {
            let report = pipeline::run_pipeline(&cfg, out, &PipelineOptions { run_morris: !skip_morris })?;
            println!(
                "optimal w (jeffreys) = {}, coverage gap at 95% = {:.3}, containment at 99% = {:.3}",
                report.optimal_w.jeffreys, report.coverage_gap_95, report.containment_99
            );
            return Ok(());
        }
    }
    m.write(out)
}
