// Negated comparisons are how NaN inputs get rejected throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod bryant;
pub mod error;
pub mod geodesic;
pub mod levelset;
pub mod mesh;
pub mod models;
pub mod ode;
pub mod pick;
pub mod suite;
pub mod warped;

pub use error::LabError;
