//! Penalized least squares with decomposable norm penalties (ℓ1, group ℓ2,1,
//! nuclear), tuning rules, compatibility and small-ball certification, and a
//! Monte Carlo harness for oracle inequalities.
//!
//! Every numerical routine is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar.

mod error;
mod scalar;

pub mod numeric;
pub mod model;
pub mod penalties;
pub mod solver;
pub mod tuning;
pub mod compat;
pub mod smallball;
pub mod bounds;
pub mod harness;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Mat64 = numeric::Mat<f64>;
pub type Mat32 = numeric::Mat<f32>;
pub type Design64 = model::DesignOperator<f64>;
pub type Design32 = model::DesignOperator<f32>;
pub type Instance64 = model::Instance<f64>;
pub type PenaltySpec64 = penalties::PenaltySpec<f64>;
pub type PenaltySpec32 = penalties::PenaltySpec<f32>;
pub type SupportProjector64 = penalties::SupportProjector<f64>;
pub type Instance32 = model::Instance<f32>;
pub type SolveOptions64 = solver::SolveOptions<f64>;
pub type SolveResult64 = solver::SolveResult<f64>;
pub type ConeSpec64 = compat::ConeSpec<f64>;
pub type ConeSection64 = smallball::ConeSection<f64>;
pub type Estimate64 = smallball::Estimate<f64>;
pub type BoundInputs64 = bounds::BoundInputs<f64>;
