//! Bernoulli thinning of finite renewal processes and its nonparametric
//! inversion.
//!
//! A flow is a finite renewal process: `W ≥ 1` renewals separated by i.i.d.
//! gaps `D`. Each renewal is kept independently with probability `q`. This
//! crate computes the sampled laws (forward direction), simulates thinned
//! datasets, and estimates the original size p.m.f. `f_W` and gap CDF `F_D`
//! back from the sampled data.

pub mod error;
pub mod experiments;
pub mod forward;
pub mod gap_inversion;
pub mod grid;
pub mod model;
pub mod numeric;
pub mod pmf;
pub mod series;
pub mod simulate;
pub mod size_inversion;
pub mod stats;

pub use error::{Error, Result};
pub use grid::{GridCdf, GridSpec};
pub use pmf::Pmf;
pub use series::CoeffSeries;
