use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{ensure, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Quantile-space coordinates at 0 or 1 are pulled this far inside before a
/// normal inverse CDF is applied.
pub const QUANTILE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Marginal {
    Uniform { a: f64, b: f64 },
    Normal { mean: f64, sd: f64 },
}

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Marginal::Uniform { a, b } => ensure!(a < b, "uniform bounds need a < b, got [{a}, {b}]"),
            Marginal::Normal { mean, sd } => {
                ensure!(sd > 0.0, "normal sd must be positive, got {sd}");
                ensure!(mean.is_finite(), "normal mean must be finite");
            }
        }
        Ok(())
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Uniform { a, b } => {
                if (a..=b).contains(&x) {
                    -(b - a).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Marginal::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - LN_SQRT_2PI
            }
        }
    }

    pub fn in_support(&self, x: f64) -> bool {
        match *self {
            Marginal::Uniform { a, b } => (a..=b).contains(&x),
            Marginal::Normal { .. } => x.is_finite(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
            Marginal::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
        }
    }

    /// Inverse CDF. Returns the value and whether `u` had to be clamped.
    pub fn quantile(&self, u: f64) -> (f64, bool) {
        match *self {
            Marginal::Uniform { a, b } => (a + (b - a) * u, false),
            Marginal::Normal { mean, sd } => {
                let clamped = u.clamp(QUANTILE_CLAMP, 1.0 - QUANTILE_CLAMP);
                let z = Normal::standard().inverse_cdf(clamped);
                (mean + sd * z, clamped != u)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::Uniform { a, b } => 0.5 * (a + b),
            Marginal::Normal { mean, .. } => mean,
        }
    }

    pub fn sd(&self) -> f64 {
        match *self {
            Marginal::Uniform { a, b } => (b - a) / 12f64.sqrt(),
            Marginal::Normal { sd, .. } => sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedMarginal {
    pub name: String,
    #[serde(flatten)]
    pub marginal: Marginal,
}

/// Independent marginal priors over named parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorSpec {
    pub params: Vec<NamedMarginal>,
}

impl PriorSpec {
    pub fn new(params: Vec<(impl Into<String>, Marginal)>) -> Result<Self> {
        let spec = PriorSpec {
            params: params
                .into_iter()
                .map(|(name, marginal)| NamedMarginal {
                    name: name.into(),
                    marginal,
                })
                .collect(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.params.iter().enumerate() {
            p.marginal.validate()?;
            ensure!(
                !self.params[..i].iter().any(|q| q.name == p.name),
                "duplicate prior name '{}'",
                p.name
            );
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    pub fn marginals(&self) -> impl Iterator<Item = &Marginal> {
        self.params.iter().map(|p| &p.marginal)
    }

    /// Joint log-density; `-inf` outside the support.
    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.dim());
        let mut total = 0.0;
        for (m, &x) in self.marginals().zip(theta) {
            let lp = m.log_pdf(x);
            if lp == f64::NEG_INFINITY {
                return lp;
            }
            total += lp;
        }
        total
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.marginals().map(|m| m.sample(rng)).collect()
    }

    /// Appends `other`'s parameters; names must stay unique.
    pub fn concat(&self, other: &PriorSpec) -> Result<PriorSpec> {
        let spec = PriorSpec {
            params: self.params.iter().chain(&other.params).cloned().collect(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Table of uncertain inputs for the charring model with their
    /// distributions. Pre-exponential factors are uniform on their log scale;
    /// conductivity coefficients are normal.
    pub fn material_table() -> Self {
        PriorSpec::new(vec![
            ("logA_1", Marginal::Uniform { a: 6.908, b: 11.51 }),
            ("logA_2", Marginal::Uniform { a: 16.12, b: 23.02 }),
            ("logA_3", Marginal::Uniform { a: 16.12, b: 23.02 }),
            ("k0_v", Marginal::Normal { mean: 0.2294, sd: 0.03825 }),
            ("k3_v", Marginal::Normal { mean: 1.694e-11, sd: 2.823e-12 }),
            ("k0_c", Marginal::Normal { mean: 0.2569, sd: 0.04283 }),
            ("k3_c", Marginal::Normal { mean: 4.510e-11, sd: 7.515e-12 }),
        ])
        .expect("static prior table is valid")
    }

    /// The five inputs retained for calibration after screening.
    pub fn calibrated_material() -> Self {
        let keep = ["logA_1", "logA_2", "k0_v", "k0_c", "k3_c"];
        PriorSpec {
            params: Self::material_table()
                .params
                .into_iter()
                .filter(|p| keep.contains(&p.name.as_str()))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_unit_square_log_prior_is_zero() {
        let p = PriorSpec::new(vec![
            ("a", Marginal::Uniform { a: 0.0, b: 1.0 }),
            ("b", Marginal::Uniform { a: 0.0, b: 1.0 }),
        ])
        .unwrap();
        assert_eq!(p.log_prior(&[0.3, 0.9]), 0.0);
        assert_eq!(p.log_prior(&[0.3, 1.2]), f64::NEG_INFINITY);
    }

    #[test]
    fn standard_normal_at_zero() {
        let m = Marginal::Normal { mean: 0.0, sd: 1.0 };
        assert!((m.log_pdf(0.0) - (-0.918_938_5)).abs() < 1e-7);
        assert!((m.log_pdf(0.0) + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn uniform_quantile_midpoint() {
        let (x, clamped) = Marginal::Uniform { a: 6.908, b: 11.51 }.quantile(0.5);
        assert!((x - 9.209).abs() < 1e-12);
        assert!(!clamped);
    }

    #[test]
    fn normal_quantile_median_is_mean() {
        let (x, _) = Marginal::Normal { mean: 0.2294, sd: 0.03825 }.quantile(0.5);
        assert!((x - 0.2294).abs() < 1e-12);
    }

    #[test]
    fn normal_quantile_endpoints_are_clamped() {
        let m = Marginal::Normal { mean: 0.0, sd: 1.0 };
        let (lo, c0) = m.quantile(0.0);
        let (hi, c1) = m.quantile(1.0);
        assert!(c0 && c1);
        assert!(lo.is_finite() && hi.is_finite() && lo < -6.0 && hi > 6.0);
    }

    #[test]
    fn duplicate_names_rejected() {
        let r = PriorSpec::new(vec![
            ("a", Marginal::Uniform { a: 0.0, b: 1.0 }),
            ("a", Marginal::Uniform { a: 0.0, b: 1.0 }),
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn json_layout() {
        let p = PriorSpec::new(vec![("k0_v", Marginal::Normal { mean: 0.2, sd: 0.01 })]).unwrap();
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(text, r#"[{"name":"k0_v","dist":"normal","mean":0.2,"sd":0.01}]"#);
        let back: PriorSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
    }
}
