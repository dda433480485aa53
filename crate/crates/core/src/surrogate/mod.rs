//! Polynomial chaos surrogates fitted by least angle regression.

mod basis;
mod field;
mod lar;
mod model;

pub use basis::{basis_eval, hyperbolic_multi_indices, standardize, BasisKind, MultiIndex};
pub use field::{fit_field, latin_hypercube, sample_runs, uniform_knots, FieldSurrogate, KnotFailure};
pub use model::{fit, pce_eval, pce_moments, standardize_point, PCEModel, PceConfig};
