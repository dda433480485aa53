//! Synthetic 1-D charring-ablator thermal response.
//!
//! A vertex-centred finite-volume conduction solver with temperature- and
//! char-dependent conductivity and three-phase Arrhenius decomposition. It
//! plays the part of the high-fidelity material response code: the
//! statistical modules only see it through [`ResponseModel`].

mod grid;
mod material;
mod scenario;
mod solver;

pub use grid::{build_grid, Grid};
pub use material::{
    advance_decomposition, char_fraction, conductivity, MaterialParams, PARAMETER_NAMES,
};
pub use scenario::{interp_clamped, BackBc, Scenario, SurfaceBc, SurfaceBcKind};
pub use solver::{
    extract_at_depth, extract_thermocouples, solve, solve_tridiagonal, TCProfile,
    TemperatureField, PICARD_MAX_SWEEPS, PICARD_MIN_SWEEPS, PICARD_TOLERANCE,
};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Parameters-to-thermocouples map `theta -> y`.
pub trait ResponseModel: Sync {
    /// Names of the inputs, in the order `evaluate` expects them.
    fn input_names(&self) -> &[String];

    /// Thermocouple labels, in output order.
    fn output_labels(&self) -> Vec<String>;

    fn evaluate(&self, theta: &[f64]) -> Result<Vec<TCProfile>>;

    fn n_inputs(&self) -> usize {
        self.input_names().len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub n_cells: usize,
    pub stretch: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n_cells: 100,
            stretch: 0.1,
        }
    }
}

/// The solver wrapped as a [`ResponseModel`] over a subset of material inputs;
/// inputs not named keep their value in `base`.
#[derive(Debug, Clone)]
pub struct SolverModel {
    pub scenario: Scenario,
    pub grid: Grid,
    pub base: MaterialParams,
    names: Vec<String>,
    /// When set, profiles are resampled onto these times.
    pub output_times: Option<Vec<f64>>,
}

impl SolverModel {
    pub fn new(scenario: Scenario, grid_spec: GridSpec, base: MaterialParams, names: Vec<String>) -> Result<Self> {
        scenario.validate()?;
        base.validate()?;
        for name in &names {
            base.get(name)?;
        }
        ensure!(!scenario.tc_labels.is_empty(), "scenario '{}' has no thermocouples", scenario.name);
        let grid = build_grid(grid_spec.n_cells, scenario.thickness, grid_spec.stretch)?;
        Ok(SolverModel {
            scenario,
            grid,
            base,
            names,
            output_times: None,
        })
    }

    pub fn with_output_times(mut self, times: Vec<f64>) -> Self {
        self.output_times = Some(times);
        self
    }

    pub fn field(&self, theta: &[f64]) -> Result<TemperatureField> {
        let params = self.base.with_values(&self.names, theta)?;
        solve(&self.scenario, &params, &self.grid)
    }
}

impl ResponseModel for SolverModel {
    fn input_names(&self) -> &[String] {
        &self.names
    }

    fn output_labels(&self) -> Vec<String> {
        self.scenario.tc_labels.clone()
    }

    fn evaluate(&self, theta: &[f64]) -> Result<Vec<TCProfile>> {
        let field = self.field(theta)?;
        let profiles = extract_thermocouples(&field, &self.scenario)?;
        Ok(match &self.output_times {
            Some(times) => profiles.iter().map(|p| p.resample(times)).collect(),
            None => profiles,
        })
    }
}
