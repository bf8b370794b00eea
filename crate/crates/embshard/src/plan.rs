//! Sharding plans: a column-split sequence plus a table-to-device assignment.
//!
//! The column plan is a list of indices into the *evolving* table list: step
//! `i` halves the table at index `col[i]`, keeps one half in place, and
//! appends the other half at the end. Applying a plan of length `s` to `T`
//! tables therefore yields `T + s` tables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncost::ModelFingerprints;
use crate::search::SearchHyper;
use crate::tables::{ShardingTask, TableConfig};

/// A complete sharding decision for one task. Device indices are 0-based.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShardingPlan {
    /// Column-wise split steps, each indexing the table list as it stood at
    /// that step.
    pub col: Vec<usize>,
    /// Device per post-split table; length is `tables + col.len()`.
    pub assign: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_cost_ms: Option<f64>,
    pub tables_after_split: Vec<TableConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hyper: Option<SearchHyper>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_fingerprints: Option<ModelFingerprints>,
    pub algorithm: String,
}

impl ShardingPlan {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Per-device cost breakdown of a plan, from either the oracle or the
/// learned models. The bottleneck is the worst per-device sum of compute,
/// forward, and backward communication.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanCost {
    pub compute_ms: Vec<f64>,
    pub fwd_comm_ms: Vec<f64>,
    pub bwd_comm_ms: Vec<f64>,
    pub bottleneck_ms: f64,
}

impl PlanCost {
    pub fn from_components(compute: Vec<f64>, fwd: Vec<f64>, bwd: Vec<f64>) -> Self {
        let bottleneck_ms = compute
            .iter()
            .zip(&fwd)
            .zip(&bwd)
            .map(|((c, f), b)| c + f + b)
            .fold(f64::NEG_INFINITY, f64::max);
        Self {
            compute_ms: compute,
            fwd_comm_ms: fwd,
            bwd_comm_ms: bwd,
            bottleneck_ms,
        }
    }
}

/// Apply a column plan to a table list. Each step replaces the indexed table
/// with one half and appends the twin half at the end.
pub fn apply_column_plan(tables: &[TableConfig], col: &[usize]) -> Result<Vec<TableConfig>> {
    let mut list = tables.to_vec();
    for (step, &c) in col.iter().enumerate() {
        if c >= list.len() {
            return Err(Error::InvalidPlan(format!(
                "split step {step} indexes table {c} but only {} tables exist",
                list.len()
            )));
        }
        let (kept, twin) = list[c].split_column_wise()?;
        list[c] = kept;
        list.push(twin);
    }
    Ok(list)
}

/// Validate a plan against its task without relying on any search machinery.
/// The split walk below re-derives dimensions and sizes with its own
/// arithmetic so that it cross-checks, rather than trusts, plan producers.
pub fn validate_plan(task: &ShardingTask, plan: &ShardingPlan) -> Result<()> {
    let mut dims: Vec<u32> = task.tables.iter().map(|t| t.dim).collect();
    let mut rows: Vec<u64> = task.tables.iter().map(|t| t.hash_size).collect();
    for (step, &c) in plan.col.iter().enumerate() {
        if c >= dims.len() {
            return Err(Error::InvalidPlan(format!(
                "split step {step}: index {c} out of range {}",
                dims.len()
            )));
        }
        let d = dims[c];
        if d < 8 || (d / 2) % 4 != 0 {
            return Err(Error::InvalidPlan(format!(
                "split step {step}: table dim {d} cannot be halved"
            )));
        }
        dims[c] = d / 2;
        dims.push(d / 2);
        rows.push(rows[c]);
    }
    if plan.assign.len() != dims.len() {
        return Err(Error::InvalidPlan(format!(
            "assignment covers {} tables but the plan produces {}",
            plan.assign.len(),
            dims.len()
        )));
    }
    if !plan.tables_after_split.is_empty() {
        if plan.tables_after_split.len() != dims.len() {
            return Err(Error::InvalidPlan(
                "recorded tables_after_split length mismatch".into(),
            ));
        }
        for (i, t) in plan.tables_after_split.iter().enumerate() {
            if t.dim != dims[i] || t.hash_size != rows[i] {
                return Err(Error::InvalidPlan(format!(
                    "recorded table {i} disagrees with the derived split"
                )));
            }
        }
    }
    let mut device_bytes = vec![0u64; task.num_devices];
    for (i, &dev) in plan.assign.iter().enumerate() {
        if dev >= task.num_devices {
            return Err(Error::InvalidPlan(format!(
                "table {i} assigned to device {dev} of {}",
                task.num_devices
            )));
        }
        device_bytes[dev] += rows[i] * dims[i] as u64 * crate::tables::BYTES_PER_ELEMENT;
    }
    for (dev, &bytes) in device_bytes.iter().enumerate() {
        if bytes > task.mem_cap_bytes {
            return Err(Error::InvalidPlan(format!(
                "device {dev} holds {bytes} bytes, cap is {}",
                task.mem_cap_bytes
            )));
        }
    }
    Ok(())
}

// ── Tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tables::TableConfig;

    fn task(dims: &[u32], devices: usize, cap: u64) -> ShardingTask {
        let tables = dims
            .iter()
            .enumerate()
            .map(|(i, &d)| TableConfig::new(format!("t{i}"), d, 1000, 2.0, 0.5))
            .collect();
        ShardingTask {
            num_devices: devices,
            mem_cap_bytes: cap,
            tables,
        }
    }

    fn plan(col: Vec<usize>, assign: Vec<usize>) -> ShardingPlan {
        ShardingPlan {
            col,
            assign,
            predicted_cost_ms: None,
            tables_after_split: Vec::new(),
            hyper: None,
            model_fingerprints: None,
            algorithm: "test".into(),
        }
    }

    #[test]
    fn test_apply_column_plan_appends_halves() {
        let t = task(&[64, 32, 16], 2, u64::MAX);
        let out = apply_column_plan(&t.tables, &[0, 3]).unwrap();
        assert_eq!(out.len(), 5);
        let dims: Vec<u32> = out.iter().map(|t| t.dim).collect();
        // step 0: halve table 0 -> [32,32,16,32]; step 1: halve appended twin
        assert_eq!(dims, vec![32, 32, 16, 16, 16]);
        assert_eq!(out[3].id, "t0");
        assert_eq!(out[4].id, "t0");
    }

    #[test]
    fn test_apply_column_plan_conserves_bytes() {
        let t = task(&[64, 32, 16, 8], 2, u64::MAX);
        let before: u64 = t.tables.iter().map(|t| t.size_bytes()).sum();
        let out = apply_column_plan(&t.tables, &[0, 1, 4, 0]).unwrap();
        let after: u64 = out.iter().map(|t| t.size_bytes()).sum();
        assert_eq!(before, after);
    }

    #[test]
    fn test_apply_column_plan_rejects_bad_index() {
        let t = task(&[64, 32], 2, u64::MAX);
        assert!(apply_column_plan(&t.tables, &[2]).is_err());
        // index 2 becomes valid only after an earlier split
        assert!(apply_column_plan(&t.tables, &[0, 2]).is_ok());
    }

    #[test]
    fn test_validate_plan_accepts_valid() {
        let t = task(&[64, 32, 16], 2, u64::MAX);
        let p = plan(vec![0], vec![0, 1, 0, 1]);
        validate_plan(&t, &p).unwrap();
    }

    #[test]
    fn test_validate_plan_rejects_wrong_length() {
        let t = task(&[64, 32, 16], 2, u64::MAX);
        assert!(validate_plan(&t, &plan(vec![0], vec![0, 1, 0])).is_err());
        assert!(validate_plan(&t, &plan(vec![], vec![0, 1, 0, 1])).is_err());
    }

    #[test]
    fn test_validate_plan_rejects_unsplittable() {
        let t = task(&[4, 8, 8, 8], 2, u64::MAX);
        assert!(validate_plan(&t, &plan(vec![0], vec![0, 1, 0, 1, 0])).is_err());
        // dim 8 halves into 4s fine
        validate_plan(&t, &plan(vec![1], vec![0, 1, 0, 1, 0])).unwrap();
    }

    #[test]
    fn test_validate_plan_rejects_memory_overflow() {
        // each table is 1000 rows * dim 64 * 4 = 256_000 bytes
        let t = task(&[64, 64], 2, 256_000);
        validate_plan(&t, &plan(vec![], vec![0, 1])).unwrap();
        assert!(validate_plan(&t, &plan(vec![], vec![0, 0])).is_err());
        // splitting one table lets a single device host 1.5 tables
        let t = task(&[64, 64], 2, 384_000);
        validate_plan(&t, &plan(vec![0], vec![0, 0, 1])).unwrap();
    }

    #[test]
    fn test_validate_plan_rejects_bad_device() {
        let t = task(&[64, 32], 2, u64::MAX);
        assert!(validate_plan(&t, &plan(vec![], vec![0, 2])).is_err());
    }

    #[test]
    fn test_plan_json_round_trip() {
        let t = task(&[64, 32], 2, u64::MAX);
        let mut p = plan(vec![0], vec![0, 1, 1]);
        p.tables_after_split = apply_column_plan(&t.tables, &p.col).unwrap();
        p.predicted_cost_ms = Some(12.5);
        let s = serde_json::to_string(&p).unwrap();
        let back: ShardingPlan = serde_json::from_str(&s).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), s);
        validate_plan(&t, &back).unwrap();
    }
}
