//! Embedding table descriptions, pools, sharding tasks, and their generators.
//!
//! A `TableConfig` describes one embedding table by the four quantities the
//! cost models consume (dimension, hash size, pooling factor, skew). Pools
//! are flat collections of tables; tasks bundle a subset of a pool with a
//! device count and a per-device memory cap.

use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bytes per embedding element (fp32 rows).
pub const BYTES_PER_ELEMENT: u64 = 4;

/// Default per-sample batch size shared by every generated table.
pub const DEFAULT_BATCH_SIZE: u32 = 65536;

/// Dimensions tables are drawn from: powers of two times four, up to 128.
pub const DIM_CHOICES: [u32; 6] = [4, 8, 16, 32, 64, 128];

fn default_batch_size() -> u32 {
    DEFAULT_BATCH_SIZE
}

fn is_default_batch_size(b: &u32) -> bool {
    *b == DEFAULT_BATCH_SIZE
}

// ── Table configuration ─────────────────────────────────────────────────────

/// One embedding table. Identity for caching purposes is the `(id, dim)`
/// pair: column-wise halves keep the parent id and are told apart (or
/// deliberately conflated, being identical) by their dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableConfig {
    pub id: String,
    /// Embedding dimension; always divisible by 4.
    pub dim: u32,
    /// Number of rows in the table.
    pub hash_size: u64,
    /// Mean lookups per query.
    pub pooling_factor: f64,
    /// Access-distribution skew in `[0, 2]`; larger means more cache-friendly.
    pub skew: f64,
    #[serde(
        default = "default_batch_size",
        skip_serializing_if = "is_default_batch_size"
    )]
    pub batch_size: u32,
}

impl TableConfig {
    pub fn new(id: impl Into<String>, dim: u32, hash_size: u64, pooling_factor: f64, skew: f64) -> Self {
        Self {
            id: id.into(),
            dim,
            hash_size,
            pooling_factor,
            skew,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }

    /// Memory footprint: `hash_size * dim * 4` bytes.
    pub fn size_bytes(&self) -> u64 {
        self.hash_size * self.dim as u64 * BYTES_PER_ELEMENT
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim % 4 != 0 {
            return Err(Error::InvalidArgument(format!(
                "table {}: dim {} must be a positive multiple of 4",
                self.id, self.dim
            )));
        }
        if self.hash_size == 0 {
            return Err(Error::InvalidArgument(format!(
                "table {}: hash_size must be positive",
                self.id
            )));
        }
        if !(self.pooling_factor > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "table {}: pooling_factor must be positive",
                self.id
            )));
        }
        if !(0.0..=2.0).contains(&self.skew) {
            return Err(Error::InvalidArgument(format!(
                "table {}: skew {} outside [0, 2]",
                self.id, self.skew
            )));
        }
        Ok(())
    }

    /// A table can be halved only while both halves keep a dimension that is
    /// a positive multiple of 4.
    pub fn is_splittable(&self) -> bool {
        self.dim >= 8 && (self.dim / 2) % 4 == 0
    }

    /// Split column-wise into two halves of `dim / 2`. Hash size, pooling
    /// factor, skew, and batch size carry over; both halves keep the parent
    /// id. Total memory is conserved exactly.
    pub fn split_column_wise(&self) -> Result<(TableConfig, TableConfig)> {
        if !self.is_splittable() {
            return Err(Error::NotSplittable {
                id: self.id.clone(),
                dim: self.dim,
            });
        }
        let mut half = self.clone();
        half.dim = self.dim / 2;
        Ok((half.clone(), half))
    }
}

// ── Pools ───────────────────────────────────────────────────────────────────

/// A flat collection of tables with the seed that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TablePool {
    pub seed: u64,
    pub tables: Vec<TableConfig>,
}

impl TablePool {
    pub fn validate(&self) -> Result<()> {
        let mut ids: Vec<&str> = self.tables.iter().map(|t| t.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("pool ids must be unique".into()));
        }
        for t in &self.tables {
            t.validate()?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let pool: TablePool = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        pool.validate()?;
        Ok(pool)
    }

    /// Content hash of the pool, recorded in dataset headers so training
    /// data stays traceable to its source tables.
    pub fn fingerprint(&self) -> String {
        crate::nncost::sha256_hex(
            serde_json::to_string(self)
                .expect("pool serializes")
                .as_bytes(),
        )
    }

    /// Import a pool from CSV with columns `id,dim,hash_size,pooling_factor,skew`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            id: String,
            dim: u32,
            hash_size: u64,
            pooling_factor: f64,
            skew: f64,
        }
        let mut reader = csv::Reader::from_path(path)?;
        let mut tables = Vec::new();
        for row in reader.deserialize() {
            let row: Row = row?;
            tables.push(TableConfig::new(
                row.id,
                row.dim,
                row.hash_size,
                row.pooling_factor,
                row.skew,
            ));
        }
        let pool = TablePool { seed: 0, tables };
        pool.validate()?;
        Ok(pool)
    }
}

/// Cross a pool with a dimension set: every table is re-issued once per
/// dimension, with the id extended so `(source id, dim)` stays recoverable.
/// Used to widen cost-model training coverage beyond the dims a pool happens
/// to contain.
pub fn augment_pool(pool: &TablePool, dims: &[u32]) -> Result<TablePool> {
    if dims.is_empty() {
        return Err(Error::InvalidArgument("augment dims must be non-empty".into()));
    }
    let mut dims = dims.to_vec();
    dims.sort_unstable();
    dims.dedup();
    for &d in &dims {
        if d == 0 || d % 4 != 0 {
            return Err(Error::InvalidArgument(format!(
                "augment dim {d} must be a positive multiple of 4"
            )));
        }
    }
    let mut tables = Vec::with_capacity(pool.tables.len() * dims.len());
    for t in &pool.tables {
        for &d in &dims {
            let mut out = t.clone();
            out.id = format!("{}:d{}", t.id, d);
            out.dim = d;
            tables.push(out);
        }
    }
    Ok(TablePool {
        seed: pool.seed,
        tables,
    })
}

// ── Sharding tasks ──────────────────────────────────────────────────────────

/// One sharding problem: place `tables` onto `num_devices` devices, none of
/// which may hold more than `mem_cap_bytes` of embedding weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShardingTask {
    pub num_devices: usize,
    pub mem_cap_bytes: u64,
    pub tables: Vec<TableConfig>,
}

impl ShardingTask {
    pub fn validate(&self) -> Result<()> {
        if self.num_devices == 0 {
            return Err(Error::InvalidArgument("num_devices must be >= 1".into()));
        }
        if self.tables.len() < self.num_devices {
            return Err(Error::InvalidArgument(format!(
                "need at least as many tables ({}) as devices ({})",
                self.tables.len(),
                self.num_devices
            )));
        }
        if self.mem_cap_bytes == 0 {
            return Err(Error::InvalidArgument("mem_cap_bytes must be positive".into()));
        }
        for t in &self.tables {
            t.validate()?;
        }
        Ok(())
    }

    pub fn total_bytes(&self) -> u64 {
        self.tables.iter().map(|t| t.size_bytes()).sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let task: ShardingTask = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        task.validate()?;
        Ok(task)
    }
}

pub fn save_tasks(path: &Path, tasks: &[ShardingTask]) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(tasks)?)?;
    Ok(())
}

pub fn load_tasks(path: &Path) -> Result<Vec<ShardingTask>> {
    let tasks: Vec<ShardingTask> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    for t in &tasks {
        t.validate()?;
    }
    Ok(tasks)
}

// ── Generators ──────────────────────────────────────────────────────────────

/// Lower and upper bounds of hash sizes drawn by `gen_pool` (log-uniform).
pub const POOL_HASH_RANGE: (f64, f64) = (1e4, 5e7);
/// Bounds of pooling factors drawn by `gen_pool` (log-uniform).
pub const POOL_POOLING_RANGE: (f64, f64) = (1.0, 100.0);

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..=hi.ln())).exp()
}

/// Generate a synthetic pool of `num_tables` tables. Hash sizes are
/// log-uniform in [1e4, 5e7], pooling factors log-uniform in [1, 100], skew
/// uniform in [0, 2], and dims uniform over `DIM_CHOICES`. Deterministic in
/// `seed`; each table is derived from its own counter-indexed stream.
pub fn gen_pool(num_tables: usize, seed: u64) -> TablePool {
    let tables = (0..num_tables)
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let hash_size = log_uniform(&mut rng, POOL_HASH_RANGE.0, POOL_HASH_RANGE.1).round() as u64;
            let pooling = log_uniform(&mut rng, POOL_POOLING_RANGE.0, POOL_POOLING_RANGE.1);
            let skew = rng.gen_range(0.0..=2.0);
            let dim = *DIM_CHOICES.choose(&mut rng).unwrap();
            TableConfig::new(
                format!("t{i:04}"),
                dim,
                hash_size.clamp(POOL_HASH_RANGE.0 as u64, POOL_HASH_RANGE.1 as u64),
                pooling,
                skew,
            )
        })
        .collect();
    TablePool { seed, tables }
}

/// Configuration for `gen_tasks`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskGenConfig {
    pub num_devices: usize,
    /// Inclusive bounds on the per-task table count.
    pub t_min: usize,
    pub t_max: usize,
    /// Largest dimension tasks may assign; must be one of `DIM_CHOICES`.
    pub max_dim: u32,
    pub count: usize,
    pub mem_cap_bytes: u64,
    /// Fraction of aggregate device memory a task's tables may occupy.
    /// Keeping headroom below 1.0 guarantees that a column-wise split plan
    /// capable of packing the task exists.
    pub mem_fill_limit: f64,
    pub seed: u64,
}

impl Default for TaskGenConfig {
    fn default() -> Self {
        Self {
            num_devices: 4,
            t_min: 10,
            t_max: 60,
            max_dim: 128,
            count: 100,
            mem_cap_bytes: 4 << 30,
            mem_fill_limit: 0.8,
            seed: 0,
        }
    }
}

const TASK_RESAMPLE_LIMIT: usize = 100_000;

/// Draw sharding tasks from a pool. Each task samples a table count uniformly
/// in `[t_min, t_max]`, picks that many distinct pool tables, and re-samples
/// every table's dimension uniformly from the `DIM_CHOICES` entries up to
/// `max_dim`. Candidate tasks are resampled until the aggregate memory guard
/// holds and every table can be shrunk under the cap by repeated halving, so
/// generated tasks are always solvable.
pub fn gen_tasks(pool: &TablePool, cfg: &TaskGenConfig) -> Result<Vec<ShardingTask>> {
    if cfg.t_min == 0 || cfg.t_min > cfg.t_max {
        return Err(Error::InvalidArgument(format!(
            "bad table count range [{}, {}]",
            cfg.t_min, cfg.t_max
        )));
    }
    if cfg.t_max > pool.tables.len() {
        return Err(Error::InvalidArgument(format!(
            "t_max {} exceeds pool size {}",
            cfg.t_max,
            pool.tables.len()
        )));
    }
    if cfg.t_min < cfg.num_devices {
        return Err(Error::InvalidArgument(format!(
            "t_min {} must be at least num_devices {}",
            cfg.t_min, cfg.num_devices
        )));
    }
    if !DIM_CHOICES.contains(&cfg.max_dim) {
        return Err(Error::InvalidArgument(format!(
            "max_dim {} must be one of {DIM_CHOICES:?}",
            cfg.max_dim
        )));
    }
    if !(cfg.mem_fill_limit > 0.0 && cfg.mem_fill_limit <= 1.0) {
        return Err(Error::InvalidArgument(
            "mem_fill_limit must be in (0, 1]".into(),
        ));
    }
    let dim_choices: Vec<u32> = DIM_CHOICES
        .iter()
        .copied()
        .filter(|&d| d <= cfg.max_dim)
        .collect();
    let budget = cfg.mem_fill_limit * (cfg.num_devices as f64) * (cfg.mem_cap_bytes as f64);

    let mut tasks = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let mut rng = stream_rng(cfg.seed, i as u64);
        let mut accepted = None;
        for _ in 0..TASK_RESAMPLE_LIMIT {
            let t = rng.gen_range(cfg.t_min..=cfg.t_max);
            let picks = rand::seq::index::sample(&mut rng, pool.tables.len(), t);
            let tables: Vec<TableConfig> = picks
                .iter()
                .map(|idx| {
                    let mut table = pool.tables[idx].clone();
                    table.dim = *dim_choices.choose(&mut rng).unwrap();
                    table
                })
                .collect();
            let total: u64 = tables.iter().map(|t| t.size_bytes()).sum();
            let shrinkable = tables
                .iter()
                .all(|t| t.hash_size * 4 * BYTES_PER_ELEMENT <= cfg.mem_cap_bytes);
            if (total as f64) <= budget && shrinkable {
                accepted = Some(tables);
                break;
            }
        }
        let tables = accepted.ok_or_else(|| {
            Error::InvalidArgument(format!(
                "could not sample a memory-feasible task after {TASK_RESAMPLE_LIMIT} tries \
                 (task {i}); lower t_max or raise mem_cap"
            ))
        })?;
        let task = ShardingTask {
            num_devices: cfg.num_devices,
            mem_cap_bytes: cfg.mem_cap_bytes,
            tables,
        };
        task.validate()?;
        tasks.push(task);
    }
    Ok(tasks)
}

// ── Tests ───────────────────────────────────────────────────────────────────
