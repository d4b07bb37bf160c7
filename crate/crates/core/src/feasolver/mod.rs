//! Linear programming, Farkas certificates and interval branch-and-bound.

pub mod bnb;
pub mod farkas;
pub mod lp;
pub mod qp;

pub use bnb::{BnbLimits, BnbOutcome};
pub use farkas::{farkas_check, primal_margin, primal_point};
pub use lp::{lp_solve, Cmp, FarkasCertificate, LinearConstraint, LinearProgram, LpOutcome, LP_FEAS_TOL};
