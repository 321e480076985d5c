//! Conditional gradient methods over atomic measures.
//!
//! A sparse inverse problem here is: find a nonnegative atomic measure
//! `mu = sum_i w_i delta(theta_i)` whose measurement `sum_i w_i psi(theta_i)`
//! explains an observation `y`, subject to a bound `tau` on the total mass.
//! The crate provides:
//!
//! - [`measure`]: atomic measures, the forward operator and support reduction.
//! - [`loss`]: smooth convex losses on residual vectors.
//! - [`fcstep`]: the finite-dimensional weight subproblem over the capped simplex.
//! - [`solver`]: the outer loops (fully-corrective CGM, ADCG and a gradient-flow
//!   baseline), the forward model contract and the duality-gap certificate.
//! - [`models`]: superresolution, LTI system identification and matrix completion.
//! - [`bench`]: data ingestion, evaluation metrics, synthetic data and experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
mod error;
pub mod fcstep;
pub mod loss;
pub mod measure;
pub mod models;
pub mod solver;
pub(crate) mod util;

pub use error::{Error, Result};
pub use fcstep::{project_capped_simplex, solve_weights, WeightProblem, WeightSolution};
pub use loss::{Loss, SquaredLoss};
pub use measure::{apply_forward, residual, Atom, AtomicMeasure, Observation, ParameterPoint};
pub use solver::{run, run_with_observer, ForwardModel, SolveResult, SolverConfig, Termination, Variant};
