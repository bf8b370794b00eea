//! Non-splitting baseline sharders: weight-balancing greedy heuristics and
//! uniform random assignment. They share the plan format with the planner
//! but never use the cost models and never split a table, so they bound what
//! workload-blind placement can achieve.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::plan::{validate_plan, ShardingPlan};
use crate::tables::{ShardingTask, TableConfig};

/// Per-table weight a greedy baseline balances across devices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heuristic {
    /// Bytes of the embedding matrix.
    Size,
    /// Embedding dimension.
    Dim,
    /// Dimension times pooling factor: values fetched per query.
    Lookup,
    /// Lookup weight times bytes.
    SizeLookup,
}

impl Heuristic {
    pub fn all() -> [Heuristic; 4] {
        [
            Heuristic::Size,
            Heuristic::Dim,
            Heuristic::Lookup,
            Heuristic::SizeLookup,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Heuristic::Size => "size",
            Heuristic::Dim => "dim",
            Heuristic::Lookup => "lookup",
            Heuristic::SizeLookup => "size_lookup",
        }
    }

    pub fn weight(&self, t: &TableConfig) -> f64 {
        match self {
            Heuristic::Size => t.size_bytes() as f64,
            Heuristic::Dim => t.dim as f64,
            Heuristic::Lookup => t.dim as f64 * t.pooling_factor,
            Heuristic::SizeLookup => t.dim as f64 * t.pooling_factor * t.size_bytes() as f64,
        }
    }
}

fn finish_plan(task: &ShardingTask, assign: Vec<usize>, algorithm: &str) -> Result<ShardingPlan> {
    let plan = ShardingPlan {
        col: Vec::new(),
        assign,
        predicted_cost_ms: None,
        tables_after_split: task.tables.clone(),
        hyper: None,
        model_fingerprints: None,
        algorithm: algorithm.into(),
    };
    validate_plan(task, &plan)?;
    Ok(plan)
}

/// Assign tables in descending weight order, each to the memory-feasible
/// device with the smallest running weight sum (ties to the lowest index).
/// Returns `None` when some table fits on no device.
pub fn greedy_shard(task: &ShardingTask, heuristic: Heuristic) -> Result<Option<ShardingPlan>> {
    task.validate()?;
    let weights: Vec<f64> = task.tables.iter().map(|t| heuristic.weight(t)).collect();
    let mut order: Vec<usize> = (0..task.tables.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));

    let mut assign = vec![0usize; task.tables.len()];
    let mut load = vec![0.0f64; task.num_devices];
    let mut bytes = vec![0u64; task.num_devices];
    for &i in &order {
        let size = task.tables[i].size_bytes();
        let mut best: Option<usize> = None;
        for d in 0..task.num_devices {
            if bytes[d] + size > task.mem_cap_bytes {
                continue;
            }
            if best.map_or(true, |b| load[d] < load[b]) {
                best = Some(d);
            }
        }
        let Some(dev) = best else {
            return Ok(None);
        };
        assign[i] = dev;
        load[dev] += weights[i];
        bytes[dev] += size;
    }
    Ok(Some(finish_plan(task, assign, heuristic.name())?))
}

/// Assign each table, in input order, to a uniformly random memory-feasible
/// device. Returns `None` when a table fits nowhere at the moment it is
/// placed.
pub fn random_shard(task: &ShardingTask, seed: u64) -> Result<Option<ShardingPlan>> {
    task.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assign = vec![0usize; task.tables.len()];
    let mut bytes = vec![0u64; task.num_devices];
    for (i, t) in task.tables.iter().enumerate() {
        let size = t.size_bytes();
        let feasible: Vec<usize> = (0..task.num_devices)
            .filter(|&d| bytes[d] + size <= task.mem_cap_bytes)
            .collect();
        let Some(&dev) = feasible.choose(&mut rng) else {
            return Ok(None);
        };
        assign[i] = dev;
        bytes[dev] += size;
    }
    Ok(Some(finish_plan(task, assign, "random")?))
}

// ── Tests ───────────────────────────────────────────────────────────────────
