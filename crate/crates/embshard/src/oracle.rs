//! Analytical cost oracle.
//!
//! Stands in for on-hardware micro-benchmarks: a closed-form model of fused
//! embedding-bag compute cost and of all-to-all communication cost. The
//! functional form is chosen so that three facts hold by construction:
//!
//! 1. halving a table's columns saves less than half of its single-table
//!    cost (sublinear `dim` exponent plus per-launch overheads),
//! 2. fusing tables into one kernel is cheaper than running them alone, and
//!    the gap grows linearly with the number of tables,
//! 3. communication cost rises strictly with the largest per-device
//!    dimension sum and ignores the dimensions of the other devices.
//!
//! Costs are in milliseconds.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plan::{apply_column_plan, validate_plan, PlanCost, ShardingPlan};
use crate::tables::{ShardingTask, TableConfig};

/// Direction of the all-to-all exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommDirection {
    Forward,
    Backward,
}

/// Coefficients of the analytical oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    /// Scale of per-table lookup work.
    pub kappa_w: f64,
    /// Fixed cost a standalone kernel pays per table.
    pub overhead_per_table: f64,
    /// Fixed cost of launching any kernel.
    pub launch_overhead: f64,
    /// Fraction of the per-table overhead that survives fusion; < 1.
    pub fusion_gamma: f64,
    /// Exponent on the embedding dimension; < 1 so halving saves less than half.
    pub dim_exponent: f64,
    /// Strength of the hash-size term.
    pub hash_coef: f64,
    /// Strength of the skew discount (skewed access is cache-friendlier).
    pub skew_coef: f64,
    /// Fixed all-to-all latency.
    pub comm_latency: f64,
    /// Per-dimension-unit cost of the forward all-to-all.
    pub comm_beta_fwd: f64,
    /// Per-dimension-unit cost of the backward all-to-all.
    pub comm_beta_bwd: f64,
    /// Multiplicative measurement-noise sigma; 0 disables noise.
    pub noise_sigma: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            kappa_w: 2.5e-3,
            overhead_per_table: 0.15,
            launch_overhead: 0.5,
            fusion_gamma: 0.3,
            dim_exponent: 0.8,
            hash_coef: 0.05,
            skew_coef: 0.3,
            comm_latency: 1.0,
            comm_beta_fwd: 0.010,
            comm_beta_bwd: 0.012,
            noise_sigma: 0.0,
        }
    }
}

impl OracleParams {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Pure lookup work of one table, before any overheads.
    pub fn work(&self, t: &TableConfig) -> f64 {
        self.kappa_w
            * t.pooling_factor
            * (t.dim as f64).powf(self.dim_exponent)
            * (1.0 + self.hash_coef * (t.hash_size as f64).log10())
            * (1.0 - self.skew_coef * t.skew.min(2.0) / 2.0)
    }

    /// Cost of running one table as its own kernel (full per-table overhead).
    pub fn single_table_cost(&self, t: &TableConfig) -> f64 {
        self.launch_overhead + self.overhead_per_table + self.work(t)
    }

    /// Cost of one fused kernel over `tables`. A single table degenerates to
    /// `single_table_cost`; an empty list is an error.
    pub fn multi_table_cost(&self, tables: &[TableConfig]) -> Result<f64> {
        if tables.is_empty() {
            return Err(Error::InvalidArgument(
                "multi_table_cost needs at least one table".into(),
            ));
        }
        if tables.len() == 1 {
            return Ok(self.single_table_cost(&tables[0]));
        }
        let mut cost = self.launch_overhead;
        for t in tables {
            cost += self.fusion_gamma * self.overhead_per_table + self.work(t);
        }
        Ok(cost)
    }

    /// `multi_table_cost` with multiplicative Gaussian noise when
    /// `noise_sigma > 0`, for emulating measurement jitter during data
    /// collection. Evaluation paths always use the noiseless form.
    pub fn multi_table_cost_noisy<R: Rng>(
        &self,
        tables: &[TableConfig],
        rng: &mut R,
    ) -> Result<f64> {
        let cost = self.multi_table_cost(tables)?;
        if self.noise_sigma <= 0.0 {
            return Ok(cost);
        }
        let noise = Normal::new(0.0, self.noise_sigma)
            .map_err(|e| Error::InvalidArgument(format!("bad noise sigma: {e}")))?;
        Ok(cost * (1.0 + noise.sample(rng)))
    }

    /// Per-device all-to-all cost. Every device enters the exchange at its
    /// start time; the exchange completes for all devices together at
    /// `max(starts) + latency + beta * max(device_dims)`, and each device is
    /// billed from its own start to that common end.
    pub fn comm_cost(
        &self,
        direction: CommDirection,
        starts: &[f64],
        device_dims: &[f64],
    ) -> Result<Vec<f64>> {
        if starts.is_empty() || starts.len() != device_dims.len() {
            return Err(Error::InvalidArgument(format!(
                "comm_cost needs matching non-empty starts ({}) and dims ({})",
                starts.len(),
                device_dims.len()
            )));
        }
        if starts.iter().chain(device_dims).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "comm_cost inputs must be finite and non-negative".into(),
            ));
        }
        let beta = match direction {
            CommDirection::Forward => self.comm_beta_fwd,
            CommDirection::Backward => self.comm_beta_bwd,
        };
        let max_start = starts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let max_dim = device_dims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let t_end = max_start + self.comm_latency + beta * max_dim;
        Ok(starts.iter().map(|s| t_end - s).collect())
    }
}

/// Ground-truth evaluation of a plan: oracle compute per device, forward
/// all-to-all started at each device's compute finish, backward all-to-all
/// started jointly at zero, and the bottleneck as the worst per-device sum.
pub fn oracle_eval_plan(
    params: &OracleParams,
    task: &ShardingTask,
    plan: &ShardingPlan,
) -> Result<PlanCost> {
    validate_plan(task, plan)?;
    let tables = apply_column_plan(&task.tables, &plan.col)?;
    let mut per_device: Vec<Vec<TableConfig>> = vec![Vec::new(); task.num_devices];
    for (i, &dev) in plan.assign.iter().enumerate() {
        per_device[dev].push(tables[i].clone());
    }
    let compute: Vec<f64> = per_device
        .iter()
        .map(|ts| {
            if ts.is_empty() {
                Ok(0.0)
            } else {
                params.multi_table_cost(ts)
            }
        })
        .collect::<Result<_>>()?;
    let device_dims: Vec<f64> = per_device
        .iter()
        .map(|ts| ts.iter().map(|t| t.dim as f64).sum())
        .collect();
    let fwd = params.comm_cost(CommDirection::Forward, &compute, &device_dims)?;
    let zeros = vec![0.0; task.num_devices];
    let bwd = params.comm_cost(CommDirection::Backward, &zeros, &device_dims)?;
    Ok(PlanCost::from_components(compute, fwd, bwd))
}

// ── Tests ───────────────────────────────────────────────────────────────────
