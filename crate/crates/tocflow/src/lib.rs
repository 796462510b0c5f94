//! Sampling from terminally constrained distributions by steering pre-trained
//! flow-based reference dynamics with optimal-control-derived guidance.
//!
//! The crate is organized around five pieces:
//!
//! * [`fields`] — reference velocity fields `b*(x, t)` with exact
//!   Jacobian-vector and vector-Jacobian products, plus the k-step Euler
//!   lookahead flow map and its sensitivity chains;
//! * [`constraints`] — residual maps `h` with the terminal cost
//!   `H = 0.5 ||h||^2` (coordinate equality, safety corridors, a Darcy PDE
//!   residual and a Kolmogorov spectral-slope statistic);
//! * [`guidance`] — weight schedules, stretched time `s(t)`, and the control
//!   solvers: gradient descent, matrix-free Gauss-Newton, the scalar-damped
//!   TOCFlow update, interpolation-based approximate GN and terminal
//!   projection;
//! * [`sampler`] — the guided integration loop with batched, seeded runs;
//! * [`oracle`] — closed-form moments for the 1-D linear-quadratic Gaussian
//!   model used to verify every solver against exact answers.
//!
//! [`experiments`] wires the pieces into desk-scale trajectory, Darcy and
//! spectrum tasks; [`fm`] provides a minimal flow-matching trainer so the
//! guidance stack can also run on a learned reference field.

pub mod config;
pub mod constraints;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod fm;
pub mod guidance;
pub mod num;
pub mod oracle;
pub mod report;
pub mod sampler;
