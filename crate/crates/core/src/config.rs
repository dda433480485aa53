//! Run configuration: one JSON document describing every stage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{EnsembleConfig, LikelihoodMode, LikelihoodSpec, PriorSpec};
use crate::divergence::{Criterion, GridConfig};
use crate::error::{Error, Result};
use crate::forward_model::{GridSpec, MaterialParams, Scenario};
use crate::sensitivity::TrajectoryConfig;
use crate::surrogate::PceConfig;

/// Known parameter values used to synthesize measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    /// Log-scale sd of the multiplicative noise.
    pub sigma: f64,
    /// Sampling interval of the synthetic records (s).
    pub spacing: f64,
    /// Overrides of the base material for the ground data.
    pub ground_truth: BTreeMap<String, f64>,
    /// Overrides of the base material for the flight data.
    pub flight_truth: BTreeMap<String, f64>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            sigma: 0.03,
            spacing: 1.0,
            ground_truth: BTreeMap::new(),
            flight_truth: BTreeMap::new(),
        }
    }
}

/// Measured records; when absent the pipeline synthesizes them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataPaths {
    pub ground: Option<PathBuf>,
    pub flight: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MorrisConfig {
    pub trajectories: TrajectoryConfig,
    /// Inputs closer to the origin than this fraction of the largest distance
    /// are screened out.
    pub screen_fraction: f64,
    /// Knot spacing of the screened outputs (s).
    pub knot_spacing: f64,
}

impl Default for MorrisConfig {
    fn default() -> Self {
        MorrisConfig {
            trajectories: TrajectoryConfig::default(),
            screen_fraction: 0.05,
            knot_spacing: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    /// Latin hypercube solver runs per scenario.
    pub n_runs: usize,
    pub knot_spacing: f64,
    pub fit: PceConfig,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            n_runs: 400,
            knot_spacing: 1.0,
            fit: PceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub ensemble: EnsembleConfig,
    pub burn: usize,
    pub thin: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            ensemble: EnsembleConfig::default(),
            burn: 20_000,
            thin: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationConfig {
    pub n_samples: usize,
    pub levels: Vec<f64>,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            n_samples: 4000,
            levels: vec![0.95, 0.99, 0.997],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub dw: f64,
    pub n_samples: usize,
    pub criterion: Criterion,
    /// Restrict divergences to the hull of the prediction intervals at this level.
    pub truncation_level: Option<f64>,
    pub grid: GridConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            dw: 0.1,
            n_samples: 4000,
            criterion: Criterion::Jeffreys,
            truncation_level: None,
            grid: GridConfig::default(),
        }
    }
}

fn default_ground() -> Scenario {
    Scenario::default_ground()
}

fn default_flight() -> Scenario {
    Scenario::default_flight()
}

fn default_screening_priors() -> PriorSpec {
    PriorSpec::material_table()
}

fn default_priors() -> PriorSpec {
    PriorSpec::calibrated_material()
}

fn default_likelihood() -> LikelihoodSpec {
    LikelihoodSpec::new(LikelihoodMode::Emulator)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ground")]
    pub ground: Scenario,
    #[serde(default = "default_flight")]
    pub flight: Scenario,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub material: MaterialParams,
    /// Inputs screened by the Morris stage.
    #[serde(default = "default_screening_priors")]
    pub screening_priors: PriorSpec,
    /// Inputs calibrated and propagated.
    #[serde(default = "default_priors")]
    pub priors: PriorSpec,
    #[serde(default = "default_likelihood")]
    pub likelihood: LikelihoodSpec,
    #[serde(default)]
    pub synthetic: SyntheticConfig,
    #[serde(default)]
    pub data: DataPaths,
    #[serde(default)]
    pub morris: MorrisConfig,
    #[serde(default)]
    pub surrogate: SurrogateConfig,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub propagation: PropagationConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

impl RunConfig {
    /// Parses, resolves data paths against the config's directory and
    /// validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data.ground, &mut cfg.data.flight].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        self.ground.validate().map_err(cfg_err)?;
        self.flight.validate().map_err(cfg_err)?;
        self.material.validate().map_err(cfg_err)?;
        self.priors.validate().map_err(cfg_err)?;
        self.screening_priors.validate().map_err(cfg_err)?;
        self.likelihood.validate().map_err(cfg_err)?;
        self.morris.trajectories.validate().map_err(cfg_err)?;
        self.surrogate.fit.validate().map_err(cfg_err)?;
        self.sweep.grid.validate().map_err(cfg_err)?;
        let check = |ok: bool, msg: String| if ok { Ok(()) } else { Err(Error::Config(msg)) };
        check(
            self.ground.tc_labels == self.flight.tc_labels,
            format!(
                "ground thermocouples {:?} and flight thermocouples {:?} differ",
                self.ground.tc_labels, self.flight.tc_labels
            ),
        )?;
        for name in self.priors.names().iter().chain(&self.screening_priors.names()) {
            self.material.get(name).map_err(cfg_err)?;
        }
        for (label, truth) in [("ground", &self.synthetic.ground_truth), ("flight", &self.synthetic.flight_truth)] {
            for name in truth.keys() {
                self.material
                    .get(name)
                    .map_err(|_| Error::Config(format!("{label} truth names unknown input '{name}'")))?;
            }
        }
        check(self.synthetic.sigma >= 0.0, "synthetic sigma must be non-negative".into())?;
        check(self.synthetic.spacing > 0.0, "synthetic spacing must be positive".into())?;
        check(self.surrogate.n_runs >= 10, "surrogate needs at least 10 runs".into())?;
        check(self.surrogate.knot_spacing > 0.0, "knot spacing must be positive".into())?;
        check(self.morris.knot_spacing > 0.0, "Morris knot spacing must be positive".into())?;
        check(
            self.morris.screen_fraction > 0.0 && self.morris.screen_fraction < 1.0,
            "screen fraction must lie in (0, 1)".into(),
        )?;
        check(self.mcmc.thin >= 1, "thin must be at least 1".into())?;
        check(
            self.mcmc.burn < self.mcmc.ensemble.chain.n_samples,
            format!(
                "burn-in {} leaves no samples of {}",
                self.mcmc.burn, self.mcmc.ensemble.chain.n_samples
            ),
        )?;
        check(self.mcmc.ensemble.n_chains >= 1, "need at least one chain".into())?;
        check(self.propagation.n_samples >= 2, "propagation needs at least 2 samples".into())?;
        check(
            self.propagation.levels.iter().all(|l| *l > 0.0 && *l < 1.0),
            "interval levels must lie in (0, 1)".into(),
        )?;
        check(self.sweep.n_samples >= 10, "sweep needs at least 10 samples".into())?;
        check(self.sweep.dw > 0.0 && self.sweep.dw <= 1.0, "dw must lie in (0, 1]".into())?;
        if let Some(l) = self.sweep.truncation_level {
            check(l > 0.0 && l < 1.0, "truncation level must lie in (0, 1)".into())?;
        }
        for p in [&self.data.ground, &self.data.flight].into_iter().flatten() {
            check(p.exists(), format!("data file {} does not exist", p.display()))?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn material_with(&self, overrides: &BTreeMap<String, f64>) -> Result<MaterialParams> {
        let mut m = self.material.clone();
        for (k, v) in overrides {
            m.set(k, *v)?;
        }
        m.validate()?;
        Ok(m)
    }
}
