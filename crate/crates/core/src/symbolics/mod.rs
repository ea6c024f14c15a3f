//! Symbolic layer: grids, fields, expressions, finite-difference
//! discretization, explicit rearrangement and common-subexpression extraction.

pub mod cse;
pub mod discretize;
pub mod expr;
pub mod fd;
pub mod grid;
pub mod normal;

pub use cse::{apply_cse, inline_temporaries};
pub use discretize::{discretize, discretize_expr, simplify, solve_forward, Eq, StencilEquation};
pub use expr::{rational_to_f64, Access, DerivWrt, Derivative, EvalEnv, Expr, MathFn, Rational, Symbol};
pub use fd::fd_coefficients;
pub use grid::{Field, FieldSpec, GridSpec, AXIS_NAMES};
pub use normal::{equivalent, normalize, Polynomial};
