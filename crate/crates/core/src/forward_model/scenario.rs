use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceBcKind {
    /// Prescribed incoming heat flux (W m^-2).
    HeatFlux,
    /// Prescribed surface temperature (K).
    Temperature,
}

/// Piecewise-linear surface boundary history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceBc {
    pub kind: SurfaceBcKind,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl SurfaceBc {
    /// Trapezoidal flux pulse starting at t = 0, zero afterwards until `duration`.
    pub fn trapezoid_flux(peak: f64, ramp_up: f64, hold: f64, ramp_down: f64, duration: f64) -> Self {
        let end = ramp_up + hold + ramp_down;
        let mut times = vec![0.0, ramp_up, ramp_up + hold, end];
        let mut values = vec![0.0, peak, peak, 0.0];
        if duration > end {
            times.push(duration);
            values.push(0.0);
        }
        SurfaceBc {
            kind: SurfaceBcKind::HeatFlux,
            times,
            values,
        }
    }

    pub fn constant(kind: SurfaceBcKind, value: f64, duration: f64) -> Self {
        SurfaceBc {
            kind,
            times: vec![0.0, duration],
            values: vec![value, value],
        }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        interp_clamped(&self.times, &self.values, t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BackBc {
    Adiabatic,
    FixedTemperature { value: f64 },
}

/// Boundary-condition context and thermocouple layout of one test or flight case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Material thickness (m).
    pub thickness: f64,
    /// Simulated time span (s).
    pub duration: f64,
    /// Time step (s).
    pub dt: f64,
    pub surface_bc: SurfaceBc,
    pub back_bc: BackBc,
    pub initial_temperature: f64,
    /// Thermocouple depths measured from the back substructure (mm).
    pub tc_depths_mm: Vec<f64>,
    /// Thermocouple labels, one per depth.
    pub tc_labels: Vec<String>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.thickness > 0.0, "scenario '{}': thickness must be positive", self.name);
        ensure!(self.dt > 0.0, "scenario '{}': dt must be positive", self.name);
        ensure!(
            self.duration >= self.dt,
            "scenario '{}': duration {} shorter than dt {}",
            self.name,
            self.duration,
            self.dt
        );
        let steps = self.duration / self.dt;
        ensure!(
            (steps - steps.round()).abs() < 1e-6,
            "scenario '{}': duration {} is not a whole number of steps of {}",
            self.name,
            self.duration,
            self.dt
        );
        ensure!(
            self.initial_temperature > 0.0,
            "scenario '{}': initial temperature must be positive",
            self.name
        );
        ensure!(
            self.tc_labels.len() == self.tc_depths_mm.len(),
            "scenario '{}': {} labels for {} thermocouple depths",
            self.name,
            self.tc_labels.len(),
            self.tc_depths_mm.len()
        );
        let thickness_mm = self.thickness * 1e3;
        for (label, &d) in self.tc_labels.iter().zip(&self.tc_depths_mm) {
            ensure!(
                (0.0..=thickness_mm + 1e-9).contains(&d),
                "scenario '{}': {label} depth {d} mm outside [0, {thickness_mm}] mm",
                self.name
            );
        }
        let bc = &self.surface_bc;
        ensure!(
            bc.times.len() == bc.values.len() && !bc.times.is_empty(),
            "scenario '{}': surface history needs matching, non-empty times and values",
            self.name
        );
        ensure!(
            bc.times.windows(2).all(|w| w[1] > w[0]),
            "scenario '{}': surface history times must increase",
            self.name
        );
        ensure!(
            bc.times[0] <= 0.0 && *bc.times.last().unwrap() >= self.duration - 1e-9,
            "scenario '{}': surface history must cover [0, {}]",
            self.name,
            self.duration
        );
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Thermocouple depths measured from the heated surface (m).
    pub fn tc_depths_from_surface(&self) -> Vec<f64> {
        self.tc_depths_mm
            .iter()
            .map(|d| self.thickness - d * 1e-3)
            .collect()
    }

    /// Ground-test style case: 25.4 mm sample, 31 s trapezoidal pulse, 60 s record.
    pub fn default_ground() -> Self {
        Scenario {
            name: "ground".into(),
            thickness: 0.0254,
            duration: 60.0,
            dt: 0.1,
            surface_bc: SurfaceBc::trapezoid_flux(1.2e5, 2.0, 27.0, 2.0, 60.0),
            back_bc: BackBc::Adiabatic,
            initial_temperature: 290.0,
            tc_depths_mm: vec![22.02, 17.53, 12.13, 7.224],
            tc_labels: vec!["TC1".into(), "TC2".into(), "TC3".into(), "TC4".into()],
        }
    }

    /// Flight-style case: 31.75 mm heat shield, triangular entry pulse.
    pub fn default_flight() -> Self {
        Scenario {
            name: "flight".into(),
            thickness: 0.03175,
            duration: 60.0,
            dt: 0.1,
            surface_bc: SurfaceBc {
                kind: SurfaceBcKind::HeatFlux,
                times: vec![0.0, 15.0, 40.0, 60.0],
                values: vec![0.0, 1.0e5, 0.0, 0.0],
            },
            back_bc: BackBc::Adiabatic,
            initial_temperature: 290.0,
            tc_depths_mm: vec![29.28, 26.36, 20.43, 13.81],
            tc_labels: vec!["TC1".into(), "TC2".into(), "TC3".into(), "TC4".into()],
        }
    }
}

/// Linear interpolation with constant extension beyond the end points.
pub fn interp_clamped(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let hi = xs.partition_point(|&v| v <= x);
    let lo = hi - 1;
    let f = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + f * (ys[hi] - ys[lo])
}
