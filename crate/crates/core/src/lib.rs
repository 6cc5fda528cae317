//! Explicit exponential Runge–Kutta integration of semidiscretized
//! reaction–diffusion problems, with boundary-corrected stage and update
//! formulas that avoid order reduction.

pub mod jet;
pub mod phi;
pub mod tableau;
pub mod space_disc;
pub mod problems;
pub mod boundary_data;
pub mod stepper;
pub mod harness;
