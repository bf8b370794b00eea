//! Synthetic training-data generation for the cost models.
//!
//! Compute samples are random table combinations labeled with the oracle's
//! fused kernel cost. Comm samples are random table placements (a blend of
//! balanced-greedy and uniform assignment, so device dimension sums cover
//! both even and skewed regimes) labeled with the oracle's per-device
//! all-to-all cost. Generation is deterministic: sample `i` of seed `s` is
//! drawn from its own counter-indexed RNG stream, so datasets are
//! reproducible and order-canonical regardless of how they are produced.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncost::feature::{featurize, FEATURE_DIM};
use crate::oracle::{CommDirection, OracleParams};
use crate::tables::{TableConfig, TablePool};

// ── Sample types ────────────────────────────────────────────────────────────

/// One fused-kernel cost measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComputeSample {
    pub table_ids: Vec<String>,
    /// Normalized per-table feature vectors.
    pub features: Vec<[f64; FEATURE_DIM]>,
    pub cost_ms: f64,
}

/// One all-to-all cost measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommSample {
    pub starts_ms: Vec<f64>,
    pub device_dims: Vec<f64>,
    pub direction: CommDirection,
    pub costs_ms: Vec<f64>,
}

// ── Table combinations (compute data) ───────────────────────────────────────

/// Configuration for `gen_table_combinations`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComboGenConfig {
    /// Inclusive bounds on tables per combination.
    pub n_min: usize,
    pub n_max: usize,
    pub count: usize,
    pub seed: u64,
}

impl Default for ComboGenConfig {
    fn default() -> Self {
        Self {
            n_min: 1,
            n_max: 15,
            count: 10_000,
            seed: 0,
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draw `count` combinations of distinct pool tables, sizes uniform in
/// `[n_min, n_max]`. Returns pool indices.
pub fn gen_table_combinations(pool: &TablePool, cfg: &ComboGenConfig) -> Result<Vec<Vec<usize>>> {
    if cfg.n_min == 0 || cfg.n_min > cfg.n_max {
        return Err(Error::InvalidArgument(format!(
            "bad combination size range [{}, {}]",
            cfg.n_min, cfg.n_max
        )));
    }
    if cfg.n_max > pool.tables.len() {
        return Err(Error::InvalidArgument(format!(
            "n_max {} exceeds pool size {}",
            cfg.n_max,
            pool.tables.len()
        )));
    }
    Ok((0..cfg.count)
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, i as u64);
            let n = rng.gen_range(cfg.n_min..=cfg.n_max);
            rand::seq::index::sample(&mut rng, pool.tables.len(), n).into_vec()
        })
        .collect())
}

/// Label combinations with the oracle's fused cost. Noise, if enabled in
/// `params`, is drawn from a per-sample stream of `noise_seed`.
pub fn collect_compute_samples(
    pool: &TablePool,
    combos: &[Vec<usize>],
    params: &OracleParams,
    noise_seed: u64,
) -> Result<Vec<ComputeSample>> {
    combos
        .iter()
        .enumerate()
        .map(|(i, combo)| {
            let tables: Vec<TableConfig> =
                combo.iter().map(|&idx| pool.tables[idx].clone()).collect();
            let mut rng = stream_rng(noise_seed, i as u64);
            let cost_ms = params.multi_table_cost_noisy(&tables, &mut rng)?;
            Ok(ComputeSample {
                table_ids: tables.iter().map(|t| t.id.clone()).collect(),
                features: tables.iter().map(featurize).collect(),
                cost_ms,
            })
        })
        .collect()
}

// ── Table placements (comm data) ────────────────────────────────────────────

/// Configuration for `gen_table_placements`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlacementGenConfig {
    pub devices: usize,
    /// Inclusive bounds on tables per placement.
    pub n_min: usize,
    pub n_max: usize,
    pub count: usize,
    /// Inclusive bounds on per-device start times, in ms.
    pub start_range_ms: (f64, f64),
    pub mem_cap_bytes: u64,
    pub seed: u64,
}

impl Default for PlacementGenConfig {
    fn default() -> Self {
        Self {
            devices: 4,
            n_min: 10,
            n_max: 60,
            count: 10_000,
            start_range_ms: (0.0, 20.0),
            mem_cap_bytes: 4 << 30,
            seed: 0,
        }
    }
}

/// One placement: per-device pool indices plus per-device start times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Placement {
    pub device_tables: Vec<Vec<usize>>,
    pub starts_ms: Vec<f64>,
}

const PLACEMENT_RESAMPLE_LIMIT: usize = 1000;

/// Draw random placements. Each placement picks a table set, sorts it by
/// descending dimension, then assigns tables one by one: with a per-placement
/// probability `p ~ U[0,1]` a table goes to the memory-feasible device with
/// the smallest dimension sum, otherwise to a uniformly random feasible
/// device. High `p` yields balanced placements, low `p` skewed ones. A
/// placement whose table set cannot fit (some table too large for every
/// device's remaining memory) is resampled a bounded number of times.
pub fn gen_table_placements(
    pool: &TablePool,
    cfg: &PlacementGenConfig,
) -> Result<Vec<Placement>> {
    if cfg.devices == 0 {
        return Err(Error::InvalidArgument("devices must be >= 1".into()));
    }
    if cfg.n_min == 0 || cfg.n_min > cfg.n_max || cfg.n_max > pool.tables.len() {
        return Err(Error::InvalidArgument(format!(
            "bad placement size range [{}, {}] for pool of {}",
            cfg.n_min,
            cfg.n_max,
            pool.tables.len()
        )));
    }
    if !(cfg.start_range_ms.0 <= cfg.start_range_ms.1 && cfg.start_range_ms.0 >= 0.0) {
        return Err(Error::InvalidArgument("bad start range".into()));
    }
    (0..cfg.count)
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, i as u64);
            for _ in 0..PLACEMENT_RESAMPLE_LIMIT {
                if let Some(p) = try_placement(pool, cfg, &mut rng) {
                    return Ok(p);
                }
            }
            Err(Error::InvalidArgument(format!(
                "placement {i}: no memory-feasible placement found after \
                 {PLACEMENT_RESAMPLE_LIMIT} tries"
            )))
        })
        .collect()
}

fn try_placement(
    pool: &TablePool,
    cfg: &PlacementGenConfig,
    rng: &mut ChaCha8Rng,
) -> Option<Placement> {
    let n = rng.gen_range(cfg.n_min..=cfg.n_max);
    let mut picks = rand::seq::index::sample(rng, pool.tables.len(), n).into_vec();
    picks.sort_by_key(|&idx| (std::cmp::Reverse(pool.tables[idx].dim), idx));
    let greedy_prob: f64 = rng.gen_range(0.0..=1.0);

    let mut device_tables: Vec<Vec<usize>> = vec![Vec::new(); cfg.devices];
    let mut device_dims = vec![0u64; cfg.devices];
    let mut device_bytes = vec![0u64; cfg.devices];
    for idx in picks {
        let t = &pool.tables[idx];
        let feasible: Vec<usize> = (0..cfg.devices)
            .filter(|&d| device_bytes[d] + t.size_bytes() <= cfg.mem_cap_bytes)
            .collect();
        if feasible.is_empty() {
            return None;
        }
        let dev = if rng.gen_range(0.0..1.0) < greedy_prob {
            *feasible
                .iter()
                .min_by_key(|&&d| (device_dims[d], d))
                .unwrap()
        } else {
            *feasible.choose(rng).unwrap()
        };
        device_tables[dev].push(idx);
        device_dims[dev] += t.dim as u64;
        device_bytes[dev] += t.size_bytes();
    }
    let starts_ms = (0..cfg.devices)
        .map(|_| rng.gen_range(cfg.start_range_ms.0..=cfg.start_range_ms.1))
        .collect();
    Some(Placement {
        device_tables,
        starts_ms,
    })
}

/// Label placements with the oracle's per-device all-to-all cost for one
/// direction.
pub fn collect_comm_samples(
    pool: &TablePool,
    placements: &[Placement],
    params: &OracleParams,
    direction: CommDirection,
) -> Result<Vec<CommSample>> {
    placements
        .iter()
        .map(|p| {
            let device_dims: Vec<f64> = p
                .device_tables
                .iter()
                .map(|ts| ts.iter().map(|&i| pool.tables[i].dim as f64).sum())
                .collect();
            let costs_ms = params.comm_cost(direction, &p.starts_ms, &device_dims)?;
            Ok(CommSample {
                starts_ms: p.starts_ms.clone(),
                device_dims,
                direction,
                costs_ms,
            })
        })
        .collect()
}

// ── Dataset files ───────────────────────────────────────────────────────────

/// First line of every dataset file: the oracle it was labeled with, the
/// generator configuration, and a fingerprint of the source pool.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<CommDirection>,
    pub oracle_params: OracleParams,
    pub generator: serde_json::Value,
    pub pool_fingerprint: String,
    pub version: u32,
}

pub const DATASET_VERSION: u32 = 1;

fn write_jsonl<S: Serialize>(path: &Path, header: &DatasetHeader, samples: &[S]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut out, header)?;
    out.write_all(b"\n")?;
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn read_jsonl<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<(DatasetHeader, Vec<S>)> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::InvalidArgument("dataset file is empty".into()))??;
    let header: DatasetHeader = serde_json::from_str(&header_line)?;
    let mut samples = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        samples.push(serde_json::from_str(&line)?);
    }
    Ok((header, samples))
}

pub fn write_compute_dataset(
    path: &Path,
    header: &DatasetHeader,
    samples: &[ComputeSample],
) -> Result<()> {
    write_jsonl(path, header, samples)
}

pub fn read_compute_dataset(path: &Path) -> Result<(DatasetHeader, Vec<ComputeSample>)> {
    let (header, samples) = read_jsonl(path)?;
    if header.kind != "compute" {
        return Err(Error::InvalidArgument(format!(
            "expected a compute dataset, found kind {:?}",
            header.kind
        )));
    }
    Ok((header, samples))
}

pub fn write_comm_dataset(
    path: &Path,
    header: &DatasetHeader,
    samples: &[CommSample],
) -> Result<()> {
    write_jsonl(path, header, samples)
}

pub fn read_comm_dataset(path: &Path) -> Result<(DatasetHeader, Vec<CommSample>)> {
    let (header, samples) = read_jsonl(path)?;
    if header.kind != "comm" {
        return Err(Error::InvalidArgument(format!(
            "expected a comm dataset, found kind {:?}",
            header.kind
        )));
    }
    Ok((header, samples))
}

// ── Tests ───────────────────────────────────────────────────────────────────
