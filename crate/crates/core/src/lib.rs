//! Multivariate fractional Brownian motion: model, exact synthesis,
//! filter-based parameter estimation and asymptotic covariances.

pub mod asymptotics;
pub mod error;
pub mod estimation;
pub mod filtering;
pub mod io;
pub mod model;
pub mod synthesis;

pub use error::{MfbmError, Result};
pub use filtering::{make_filter, DilatedFilter, Filter};
pub use model::{validate, MfbmParams, ValidityReport};
pub use synthesis::{CirculantSampler, ExactSampler, PathSampler, SamplePath};
