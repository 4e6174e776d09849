//! Dyadic oscillation norms: local polynomial approximation on dyadic
//! cubes, fractional maximal operators, packing and sparse families, and
//! the John–Nirenberg type norms built from them.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`, which the verification suites use.

// `!(x >= y)` rejects NaN along with small values; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod families;
pub mod grid;
pub mod maximal;
pub mod norms;
pub mod poly;
pub mod rearrange;
pub mod scalar;
pub mod verify;

pub use error::{Error, Result};
pub use families::{
    cz_family, enumerate_families, validate, CubeFamily, FamilyCatalog, FamilyClass, FamilyRecord, Violation,
};
pub use grid::{CubeId, DyadicTree, GridFunction, MomentTable};
pub use maximal::{fractional_maximal, lp_norm, maximal_opnorm_bound, MaximalResult};
pub use norms::{
    garo_norm, local_weights, packing_sup_norm, sparse_norm_bounds, sparse_sup_exhaustive, NormParams, NormReport,
    Oscillation,
};
pub use poly::{best_fit, scaled_error, Convention, LocalApproximation, LocalPoly, PolyFit};
pub use rearrange::{rearrangement, ri_functionals, Rearrangement, RiFunctionals};
pub use scalar::Scalar;

pub type Grid = GridFunction<f64>;
pub type Grid32 = GridFunction<f32>;
pub type Params = NormParams<f64>;
pub type Report = NormReport<f64>;
pub type Fit = PolyFit<f64>;
