//! Energy-based physics-informed neural networks for the steady heat
//! equation, weakly coupled to a time-harmonic magnetic solver, with a
//! hypernetwork for parametric solutions and an optimization suite for
//! single- and multi-objective inductor design.
//!
//! The crate is organized around the data flow of the coupled problem:
//!
//! * [`fields`] — finite-difference reference solvers for the thermal and
//!   magnetic problems, plus the Joule-loss coupling between them.
//! * [`geometry`] — structured quadrature mesh of the plate used by the
//!   variational training losses.
//! * [`autodiff`] — scalar reverse-mode tape with nested forward-over-reverse
//!   for second spatial derivatives.
//! * [`neural`] — fully-connected networks, parameter layout, and fast
//!   derivative-propagation kernels used by training.
//! * [`losses`] — the energy functional, strong-residual, and hypernetwork
//!   training losses.
//! * [`training`] — ADAM, dataset generation, and the three training
//!   pipelines (supervised magnetic surrogate, per-geometry PINN,
//!   hypernetwork).
//! * [`design`] — inverse-design objectives and optimizers (differential
//!   evolution, NSGA-II, augmented-Lagrangian projected gradient).

pub mod autodiff;
pub mod config;
pub mod design;
pub mod fields;
pub mod geometry;
pub mod losses;
pub mod neural;
pub mod training;
pub mod util;
