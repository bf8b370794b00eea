//! Embedding table sharding driven by learned cost models.
//!
//! Recommendation models keep most of their parameters in embedding tables,
//! and placing those tables across accelerators decides both memory fit and
//! step time. This crate plans such placements in four stages:
//!
//! 1. [`oracle`] defines an analytical cost model of fused embedding
//!    kernels and all-to-all exchanges, used to label data and to judge
//!    final plans.
//! 2. [`datagen`] draws random table combinations and placements and labels
//!    them with the oracle.
//! 3. [`nncost`] pre-trains neural cost models on that data: a
//!    permutation-invariant fused-compute model and per-direction comm
//!    models, built on a small from-scratch MLP stack.
//! 4. [`search`] plans one concrete task with the trained models: a beam
//!    search over column-wise table splits around a greedy, grid-swept
//!    device assignment, with memoized predictions.
//!
//! [`baselines`] supplies model-free sharders and [`harness`] evaluates
//! everything side by side against the oracle.
//!
//! Every stage is deterministic given its seeds: datasets, trained weights,
//! plans, and reports reproduce bit for bit.

pub mod baselines;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod nncost;
pub mod oracle;
pub mod plan;
pub mod search;
pub mod tables;

pub use error::{Error, Result};
pub use harness::{Algorithm, EvalOptions, EvalReport};
pub use nncost::{CommCostModel, ComputeCostModel, CostModelBundle, TrainConfig};
pub use oracle::{CommDirection, OracleParams};
pub use plan::{PlanCost, ShardingPlan};
pub use search::{plan_task, simulate_plan_cost, SearchHyper, SearchOutcome};
pub use tables::{ShardingTask, TableConfig, TablePool};
