//! Switchback experiments on finite-state Markov systems with carryover.
//!
//! - [`mdp`]: system specs, the benchmark chain, simulation, mixing diagnostics
//! - [`design`]: regular Bernoulli switchback designs and assignment
//! - [`estimator`]: burn-in-discarding difference in means
//! - [`estimand`]: exact and Monte Carlo ground truth
//! - [`bounds`]: bias/variance bounds, optimal designs, rate fitting
//! - [`harness`]: Monte Carlo grids and normal-approximation diagnostics

pub mod bounds;
pub mod config;
pub mod design;
pub mod error;
pub mod estimand;
pub mod estimator;
pub mod harness;
pub mod mdp;
pub mod rng;
pub mod stats;

pub use bounds::{ModelBounds, Target};
pub use design::{assign, AssignmentPlan, SwitchbackDesign};
pub use error::{Error, Result};
pub use estimator::{block_means, dm_estimate, EstimateReport};
pub use mdp::{build_benchmark, BenchmarkParams, FiniteMdpSpec, MdpSchedule, Trajectory};
