//! Online sequential search over costly alternatives.
//!
//! Each round an adversary fixes hidden box values; the searcher opens boxes
//! one at a time (paying one unit per opening), then selects a feasible set
//! (a single box, k boxes, or a matroid basis) and pays the selected values.
//! This crate provides:
//!
//! - fractional schedule relaxations with closed-form or cutting-plane
//!   evaluation and subgradients,
//! - a follow-the-regularized-leader learner over the doubly stochastic
//!   polytope with Sinkhorn projection,
//! - randomized roundings turning schedules into opening orders with
//!   scenario-aware or rent-or-buy stopping,
//! - a bandit-feedback wrapper with interval exploration,
//! - a non-adaptive benchmark learner built on ellipsoid feasibility with
//!   budget doubling, plus its own roundings,
//! - exact small-scale oracles (dense simplex with duals, brute-force
//!   benchmarks) and an experiment harness with CSV/JSON/SVG reporting.

pub mod bandit;
pub mod cost;
pub mod error;
pub mod ftrl;
pub mod harness;
pub mod ledger;
pub mod lp;
pub mod matroid;
pub mod model;
pub mod na;
pub mod oracle;
pub mod relax;
pub mod rng;
pub mod rounding;

pub use cost::Cost;
pub use error::{Error, Result};
pub use model::{ConstraintFamily, Scenario, ScenarioSequence};
