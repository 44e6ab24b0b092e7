//! Solver and analysis toolkit for 1-D scalar conservation laws
//! `u_t + f(u)_x = 0` with piecewise polynomial flux `f`, including
//! non-convex fluxes with degenerate inflection points.
//!
//! The solver evolves piecewise constant data exactly under a polygonal
//! (piecewise linear) approximation of the flux, resolving every jump
//! through convex/concave envelope constructions and processing front
//! collisions in event order. On top of the solver sit diagnostics for
//! quantitative regularity: a nonlinearity modulus for the flux, gauge
//! total variation (generalised bounded variation), an undulation
//! decomposition of nonnegative profiles, characteristic tracking, and
//! entropy dissipation bookkeeping.

pub mod analysis;
pub mod constructions;
pub mod error;
pub mod flux;
pub mod fronttrack;
pub mod kinetic;
pub mod lagrangian;
pub mod pwfun;
pub mod riemann;
pub mod scenario;

pub use error::{Error, Result};
