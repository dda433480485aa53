use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Names of the material inputs that can be placed under uncertainty.
pub const PARAMETER_NAMES: [&str; 7] = [
    "logA_1", "logA_2", "logA_3", "k0_v", "k3_v", "k0_c", "k3_c",
];

/// Thermal and decomposition properties of the charring material.
///
/// Conductivity of each state follows `k(T) = k0 + k3 T^3`; virgin and char
/// values are blended linearly by the local char fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// Natural log of the pre-exponential factor per decomposition sub-phase (log 1/s).
    pub log_a: [f64; 3],
    /// Activation temperature `E_a / R` per sub-phase (K).
    pub ea_over_r: [f64; 3],
    pub k0_v: f64,
    pub k3_v: f64,
    pub k0_c: f64,
    pub k3_c: f64,
    /// Volumetric heat capacity (J m^-3 K^-1).
    pub rho_cp: f64,
    /// Mass weight of each sub-phase in the char fraction.
    pub phase_weights: [f64; 3],
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self::nominal()
    }
}

impl MaterialParams {
    /// Nominal TACOT-like values. Activation temperatures, phase weights and
    /// the heat capacity are fixed constants of this model, not calibrated.
    pub fn nominal() -> Self {
        MaterialParams {
            log_a: [9.393, 20.03, 20.03],
            ea_over_r: [8000.0, 12000.0, 12000.0],
            k0_v: 0.2294,
            k3_v: 1.694e-11,
            k0_c: 0.2569,
            k3_c: 4.510e-11,
            rho_cp: 3.0e5,
            phase_weights: [0.25, 0.5, 0.25],
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.k0_v > 0.0, "k0_v must be positive, got {}", self.k0_v);
        ensure!(self.k0_c > 0.0, "k0_c must be positive, got {}", self.k0_c);
        ensure!(self.k3_v >= 0.0, "k3_v must be nonnegative, got {}", self.k3_v);
        ensure!(self.k3_c >= 0.0, "k3_c must be nonnegative, got {}", self.k3_c);
        ensure!(self.rho_cp > 0.0, "rho_cp must be positive, got {}", self.rho_cp);
        ensure!(
            self.phase_weights.iter().all(|&w| w >= 0.0),
            "phase weights must be nonnegative"
        );
        let total: f64 = self.phase_weights.iter().sum();
        ensure!(
            (total - 1.0).abs() <= 1e-12,
            "phase weights must sum to 1, got {total}"
        );
        ensure!(
            self.log_a.iter().chain(&self.ea_over_r).all(|v| v.is_finite()),
            "decomposition constants must be finite"
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        Ok(match name {
            "logA_1" => self.log_a[0],
            "logA_2" => self.log_a[1],
            "logA_3" => self.log_a[2],
            "k0_v" => self.k0_v,
            "k3_v" => self.k3_v,
            "k0_c" => self.k0_c,
            "k3_c" => self.k3_c,
            other => return Err(unknown(other)),
        })
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = match name {
            "logA_1" => &mut self.log_a[0],
            "logA_2" => &mut self.log_a[1],
            "logA_3" => &mut self.log_a[2],
            "k0_v" => &mut self.k0_v,
            "k3_v" => &mut self.k3_v,
            "k0_c" => &mut self.k0_c,
            "k3_c" => &mut self.k3_c,
            other => return Err(unknown(other)),
        };
        *slot = value;
        Ok(())
    }

    /// Copy of `self` with the named inputs replaced.
    pub fn with_values(&self, names: &[String], values: &[f64]) -> Result<Self> {
        ensure!(
            names.len() == values.len(),
            "{} parameter names but {} values",
            names.len(),
            values.len()
        );
        let mut out = self.clone();
        for (name, &value) in names.iter().zip(values) {
            out.set(name, value)?;
        }
        Ok(out)
    }
}

fn unknown(name: &str) -> Error {
    Error::InvalidArgument(format!(
        "unknown material parameter '{name}' (expected one of {PARAMETER_NAMES:?})"
    ))
}

/// Effective conductivity at temperature `t` and char fraction `chi`.
#[inline]
pub fn conductivity(t: f64, chi: f64, params: &MaterialParams) -> f64 {
    let t3 = t * t * t;
    let virgin = params.k0_v + params.k3_v * t3;
    let char_ = params.k0_c + params.k3_c * t3;
    (1.0 - chi) * virgin + chi * char_
}

/// Advances the three decomposition extents over `dt` at frozen temperature `t`.
///
/// Each extent obeys first-order Arrhenius kinetics, integrated exactly:
/// `xi' = 1 - (1 - xi) exp(-A exp(-Ea/RT) dt)`.
pub fn advance_decomposition(xi: [f64; 3], t: f64, dt: f64, params: &MaterialParams) -> [f64; 3] {
    let mut out = xi;
    for j in 0..3 {
        let rate = (params.log_a[j] - params.ea_over_r[j] / t).exp();
        let remaining = (1.0 - xi[j]) * (-rate * dt).exp();
        out[j] = (1.0 - remaining).clamp(xi[j], 1.0);
    }
    out
}

#[inline]
pub fn char_fraction(xi: &[f64; 3], params: &MaterialParams) -> f64 {
    let chi: f64 = xi.iter().zip(&params.phase_weights).map(|(x, w)| x * w).sum();
    chi.clamp(0.0, 1.0)
}
