//! Numerical engines: ellipsoid method, projected Newton on the orthant,
//! dense simplex.

pub mod ellipsoid;
pub mod lp;
pub mod orthant;

pub use ellipsoid::{
    ellipsoid_maximize, ellipsoid_maximize_with, Control, EllipsoidOutcome, EllipsoidSettings,
    EllipsoidState, OracleAnswer, Progress, TracePoint,
};
pub use lp::{lp_solve, LinearConstraint, LpNum, LpProblem, LpSolution, LpStatus, Relation};
pub use orthant::{
    maximize_concave_orthant, Evaluation, Order, OrthantOutcome, OrthantSettings, SmoothConcave,
};
