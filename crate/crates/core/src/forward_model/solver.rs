use std::io::Write;

use serde::{Deserialize, Serialize};

use super::grid::Grid;
use super::material::{advance_decomposition, char_fraction, conductivity, MaterialParams};
use super::scenario::{BackBc, Scenario, SurfaceBcKind};
use crate::error::{Error, Result};

pub const PICARD_TOLERANCE: f64 = 1e-8;
pub const PICARD_MIN_SWEEPS: usize = 2;
pub const PICARD_MAX_SWEEPS: usize = 50;

/// Temperatures and char fractions at every node and stored time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureField {
    pub times: Vec<f64>,
    pub node_positions: Vec<f64>,
    /// Row-major `times.len() x node_positions.len()`.
    pub temperatures: Vec<f64>,
    /// Same layout as `temperatures`.
    pub char_fraction: Vec<f64>,
}

impl TemperatureField {
    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.node_positions.len()
    }

    pub fn temperature_row(&self, time_index: usize) -> &[f64] {
        let n = self.n_nodes();
        &self.temperatures[time_index * n..(time_index + 1) * n]
    }

    pub fn char_row(&self, time_index: usize) -> &[f64] {
        let n = self.n_nodes();
        &self.char_fraction[time_index * n..(time_index + 1) * n]
    }

    pub fn node_series(&self, node: usize) -> Vec<f64> {
        let n = self.n_nodes();
        self.temperatures.iter().skip(node).step_by(n).copied().collect()
    }

    /// Writes `time,node_0,...,node_{n-1}` followed by one row per stored time.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = std::iter::once("time".to_string())
            .chain((0..self.n_nodes()).map(|j| format!("node_{j}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (i, t) in self.times.iter().enumerate() {
            write!(out, "{t}")?;
            for v in self.temperature_row(i) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// One thermocouple time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TCProfile {
    pub label: String,
    pub times: Vec<f64>,
    /// Temperatures (K).
    pub values: Vec<f64>,
    /// Depth from the heated surface (m).
    pub depth: f64,
}

impl TCProfile {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Values linearly interpolated onto `times` (clamped at the ends).
    pub fn resample(&self, times: &[f64]) -> TCProfile {
        TCProfile {
            label: self.label.clone(),
            times: times.to_vec(),
            values: times
                .iter()
                .map(|&t| super::scenario::interp_clamped(&self.times, &self.values, t))
                .collect(),
            depth: self.depth,
        }
    }
}

/// Backward-Euler solution of `rho_cp dT/dt = d/dx(k(T, chi) dT/dx)` with
/// Picard-lagged conductivity and Arrhenius charring.
///
/// The surface node receives the prescribed flux (or is pinned to the
/// prescribed temperature); the back node is adiabatic or pinned. Each step
/// first advances decomposition at the start-of-step temperature, then
/// iterates the implicit conduction solve until the sweep-to-sweep change
/// drops below [`PICARD_TOLERANCE`].
pub fn solve(scenario: &Scenario, params: &MaterialParams, grid: &Grid) -> Result<TemperatureField> {
    scenario.validate()?;
    params.validate()?;
    let thickness_gap = (grid.thickness() - scenario.thickness).abs();
    if thickness_gap > 1e-12 * scenario.thickness.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "grid thickness {} does not match scenario thickness {}",
            grid.thickness(),
            scenario.thickness
        )));
    }

    let n = grid.n_nodes();
    let n_steps = scenario.n_steps();
    let dt = scenario.dt;
    let volumes = grid.dual_volumes();
    let widths = &grid.cell_widths;

    let mut temperature = vec![scenario.initial_temperature; n];
    let mut extents = vec![[0.0f64; 3]; n];
    let mut chi = vec![0.0f64; n];

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut temps_out = Vec::with_capacity((n_steps + 1) * n);
    let mut chi_out = Vec::with_capacity((n_steps + 1) * n);
    times.push(0.0);
    temps_out.extend_from_slice(&temperature);
    chi_out.extend_from_slice(&chi);

    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut k_node = vec![0.0; n];
    let mut k_face = vec![0.0; n - 1];
    let mut scratch = vec![0.0; n];
    let mut iterate = temperature.clone();
    let mut next = vec![0.0; n];

    for step in 1..=n_steps {
        let t_new = step as f64 * dt;

        for j in 0..n {
            extents[j] = advance_decomposition(extents[j], temperature[j], dt, params);
            chi[j] = char_fraction(&extents[j], params);
        }

        iterate.copy_from_slice(&temperature);
        let surface_value = scenario.surface_bc.value_at(t_new);
        let mut converged = false;
        let mut last_change = f64::INFINITY;

        for sweep in 0..PICARD_MAX_SWEEPS {
            for j in 0..n {
                k_node[j] = conductivity(iterate[j], chi[j], params);
            }
            for c in 0..n - 1 {
                k_face[c] = 0.5 * (k_node[c] + k_node[c + 1]) / widths[c];
            }

            for j in 0..n {
                let capacity = params.rho_cp * volumes[j] / dt;
                let left = if j > 0 { k_face[j - 1] } else { 0.0 };
                let right = if j + 1 < n { k_face[j] } else { 0.0 };
                lower[j] = -left;
                upper[j] = -right;
                diag[j] = capacity + left + right;
                rhs[j] = capacity * temperature[j];
            }
            match scenario.surface_bc.kind {
                SurfaceBcKind::HeatFlux => rhs[0] += surface_value,
                SurfaceBcKind::Temperature => pin(&mut lower, &mut diag, &mut upper, &mut rhs, 0, surface_value),
            }
            if let BackBc::FixedTemperature { value } = scenario.back_bc {
                pin(&mut lower, &mut diag, &mut upper, &mut rhs, n - 1, value);
            }

            solve_tridiagonal(&lower, &diag, &upper, &rhs, &mut scratch, &mut next);

            last_change = next
                .iter()
                .zip(&iterate)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            std::mem::swap(&mut iterate, &mut next);
            if sweep + 1 >= PICARD_MIN_SWEEPS && last_change < PICARD_TOLERANCE {
                converged = true;
                break;
            }
        }
        if !converged || iterate.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverDivergence {
                step,
                iterations: PICARD_MAX_SWEEPS,
                last_change,
            });
        }
        temperature.copy_from_slice(&iterate);

        times.push(t_new);
        temps_out.extend_from_slice(&temperature);
        chi_out.extend_from_slice(&chi);
    }

    Ok(TemperatureField {
        times,
        node_positions: grid.node_positions.clone(),
        temperatures: temps_out,
        char_fraction: chi_out,
    })
}

fn pin(lower: &mut [f64], diag: &mut [f64], upper: &mut [f64], rhs: &mut [f64], j: usize, value: f64) {
    lower[j] = 0.0;
    upper[j] = 0.0;
    diag[j] = 1.0;
    rhs[j] = value;
}

/// Thomas algorithm. `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
    scratch: &mut [f64],
    out: &mut [f64],
) {
    let n = diag.len();
    let mut beta = diag[0];
    out[0] = rhs[0] / beta;
    for i in 1..n {
        scratch[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * scratch[i];
        out[i] = (rhs[i] - lower[i] * out[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        out[i] -= scratch[i + 1] * out[i + 1];
    }
}

/// Thermocouple series by linear interpolation between the bounding nodes.
pub fn extract_thermocouples(field: &TemperatureField, scenario: &Scenario) -> Result<Vec<TCProfile>> {
    let depths = scenario.tc_depths_from_surface();
    scenario
        .tc_labels
        .iter()
        .zip(depths)
        .map(|(label, depth)| extract_at_depth(field, label, depth))
        .collect()
}

pub fn extract_at_depth(field: &TemperatureField, label: &str, depth: f64) -> Result<TCProfile> {
    let x = &field.node_positions;
    let last = *x.last().expect("field has nodes");
    let slack = 1e-12 * last.max(1e-3);
    if !(depth >= -slack && depth <= last + slack) {
        return Err(Error::OutOfRange(format!(
            "thermocouple {label} at depth {depth} m lies outside the grid [0, {last}] m"
        )));
    }
    let depth = depth.clamp(0.0, last);
    // Index of the first node strictly deeper than `depth`.
    let hi = x.partition_point(|&p| p <= depth);
    let values = if hi == 0 {
        field.node_series(0)
    } else if x[hi - 1] == depth || hi == x.len() {
        field.node_series(hi - 1)
    } else {
        let lo = hi - 1;
        let f = (depth - x[lo]) / (x[hi] - x[lo]);
        let a = field.node_series(lo);
        let b = field.node_series(hi);
        a.iter().zip(&b).map(|(u, v)| u + f * (v - u)).collect()
    };
    Ok(TCProfile {
        label: label.to_string(),
        times: field.times.clone(),
        values,
        depth,
    })
}
