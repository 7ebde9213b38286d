//! # hbary-core
//!
//! Barycenters of discrete probability measures with respect to a convex
//! interaction cost `h`, computed through multi-marginal optimal transport.
//!
//! For points `x_1, ..., x_N` and weights `lambda`, the h-barycenter is the
//! minimizer of `z -> sum_i lambda_i h(x_i - z)` and the induced cost
//! `c_h(x)` is the minimal value. Coupling the marginals optimally for
//! `c_h` and pushing the plan forward under the barycenter map gives the
//! h-Wasserstein barycenter, which also minimizes
//! `rho -> sum_i lambda_i W_h(mu_i, rho)`.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`cost`] | admissible costs `h` with exact derivatives |
//! | [`barycenter`] | pointwise barycenters, `c_h` and its derivatives |
//! | [`measure`] | discrete probability measures |
//! | [`tensor`] | problems and dense cost tensors |
//! | [`lp`] | exact multi-marginal transport (simplex) |
//! | [`entropic`] | regularized multi-marginal transport |
//! | [`two_marginal`] | `W_h`, coupled objective, extraction and gluing |
//! | [`diagnostics`] | monotonicity, injectivity, Monge structure, duality |
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;

pub mod barycenter;
pub mod cost;
pub mod diagnostics;
pub mod entropic;
mod error;
mod linalg;
pub mod lp;
pub mod measure;
pub mod plan;
pub mod quadrature;
pub mod tensor;
pub mod two_marginal;

pub use barycenter::{cost_ch, solve_barycenter, BarycenterJet, Configuration, Weights};
pub use cost::{AssumptionReport, ConvexCost, CostKind};
pub use diagnostics::{diagnose, DiagnosticsOptions, DiagnosticsReport};
pub use entropic::solve_mmot_entropic;
pub use error::{Error, Result};
pub use linalg::min_eigenvalue;
pub use lp::solve_mmot_lp;
pub use measure::DiscreteMeasure;
pub use plan::{push_forward_barycenter, PlanAtom, Potentials, TransportPlan};
pub use tensor::{assemble_cost_tensor, CostTensor, Problem, TensorShape};
pub use two_marginal::{coupled_objective, extract_two_marginal, glue_from_disintegration, solve_w_h, TwoMarginalPlan};
