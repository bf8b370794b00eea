//! Plan search over column splits and device assignments.
//!
//! The planner is two nested searches. The inner one, `greedy_grid_search`,
//! takes a fixed table list and sweeps a grid of per-device dimension caps;
//! for each cap it places tables one by one (most expensive first) onto the
//! memory-feasible device, still under the cap, that minimizes the predicted
//! fused compute cost after insertion, then scores the completed assignment
//! end to end. The outer beam search grows column-split sequences, scoring
//! each candidate sequence with the inner search and keeping the best
//! `beam_width` at every level.
//!
//! All model queries flow through a `SearchContext`, which owns the
//! prediction cache and evaluation counters. Ties are always broken by the
//! lowest index, so a (models, task, hyper) triple yields one bit-exact plan.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncost::{CostModelBundle, EMBED_DIM};
use crate::plan::{apply_column_plan, validate_plan, PlanCost, ShardingPlan};
use crate::tables::{ShardingTask, TableConfig};

/// Search hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHyper {
    /// Split candidates shortlisted per ranking (by predicted cost and by
    /// size) at each beam level.
    pub shortlist: usize,
    /// Plans kept per beam level.
    pub beam_width: usize,
    /// Maximum column splits, i.e. beam depth. Zero disables splitting.
    pub max_splits: usize,
    /// Number of dimension caps swept by the assignment grid.
    pub grid_points: usize,
}

impl Default for SearchHyper {
    fn default() -> Self {
        Self {
            shortlist: 10,
            beam_width: 3,
            max_splits: 10,
            grid_points: 11,
        }
    }
}

impl SearchHyper {
    pub fn validate(&self) -> Result<()> {
        if self.shortlist == 0 || self.beam_width == 0 || self.grid_points == 0 {
            return Err(Error::InvalidArgument(format!(
                "shortlist ({}), beam_width ({}) and grid_points ({}) must be >= 1",
                self.shortlist, self.beam_width, self.grid_points
            )));
        }
        Ok(())
    }
}

// ── Prediction cache ────────────────────────────────────────────────────────

/// Memoizes fused-compute predictions keyed by the device's table multiset.
/// Keys are order-independent, so permutations of one set share an entry.
/// When disabled, every query is counted as a miss and nothing is stored.
#[derive(Debug)]
pub struct PredictionCache {
    enabled: bool,
    map: HashMap<Vec<u64>, f64>,
    hits: u64,
    misses: u64,
}

impl PredictionCache {
    pub fn new(enabled: bool) -> Self {
        Self {
            enabled,
            map: HashMap::new(),
            hits: 0,
            misses: 0,
        }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    fn get(&mut self, key: &[u64]) -> Option<f64> {
        if !self.enabled {
            self.misses += 1;
            return None;
        }
        match self.map.get(key) {
            Some(&v) => {
                self.hits += 1;
                Some(v)
            }
            None => {
                self.misses += 1;
                None
            }
        }
    }

    fn put(&mut self, key: Vec<u64>, value: f64) {
        if self.enabled {
            self.map.insert(key, value);
        }
    }
}

/// Evaluation counters for one search run.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct SearchStats {
    /// Completed assignments scored end to end.
    pub plans_evaluated: u64,
    /// Fused-compute head evaluations (cache misses that reached the model).
    pub model_evals: u64,
    /// Comm model evaluations.
    pub comm_evals: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
}

impl SearchStats {
    pub fn cache_hit_rate(&self) -> f64 {
        let total = self.cache_hits + self.cache_misses;
        if total == 0 {
            0.0
        } else {
            self.cache_hits as f64 / total as f64
        }
    }
}

// ── Search context ──────────────────────────────────────────────────────────

/// Model access point for one task's search: prediction cache, per-table
/// embedding memo, and counters. The memo only stores encoder outputs, which
/// are summed in the same canonical order as `ComputeCostModel::predict`, so
/// cached and uncached paths give bit-identical predictions.
pub struct SearchContext<'a> {
    models: &'a CostModelBundle,
    devices: usize,
    id_rank: HashMap<String, u32>,
    embed_memo: HashMap<(u32, u32), Vec<f64>>,
    pub cache: PredictionCache,
    model_evals: u64,
    comm_evals: u64,
    plans_evaluated: u64,
}

impl<'a> SearchContext<'a> {
    pub fn new(
        models: &'a CostModelBundle,
        task: &ShardingTask,
        cache_enabled: bool,
    ) -> Result<Self> {
        task.validate()?;
        models.validate()?;
        if models.devices() != task.num_devices {
            return Err(Error::InvalidArgument(format!(
                "comm models cover {} devices, task has {}",
                models.devices(),
                task.num_devices
            )));
        }
        let mut ids: Vec<&str> = task.tables.iter().map(|t| t.id.as_str()).collect();
        ids.sort_unstable();
        let id_rank = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.to_string(), i as u32))
            .collect();
        Ok(Self {
            models,
            devices: task.num_devices,
            id_rank,
            embed_memo: HashMap::new(),
            cache: PredictionCache::new(cache_enabled),
            model_evals: 0,
            comm_evals: 0,
            plans_evaluated: 0,
        })
    }

    pub fn stats(&self) -> SearchStats {
        SearchStats {
            plans_evaluated: self.plans_evaluated,
            model_evals: self.model_evals,
            comm_evals: self.comm_evals,
            cache_hits: self.cache.hits(),
            cache_misses: self.cache.misses(),
        }
    }

    /// Tables are identified by (id rank, dim); split halves share the
    /// parent's id and dim and are genuinely interchangeable.
    fn table_token(&self, t: &TableConfig) -> u64 {
        let rank = self.id_rank[&t.id] as u64;
        (rank << 32) | t.dim as u64
    }

    fn set_key(&self, tables: &[&TableConfig]) -> Vec<u64> {
        let mut key: Vec<u64> = tables.iter().map(|t| self.table_token(t)).collect();
        key.sort_unstable();
        key
    }

    /// Predicted fused compute cost of one device's table set. Empty devices
    /// cost zero by convention.
    pub fn predict_compute(&mut self, tables: &[&TableConfig]) -> f64 {
        if tables.is_empty() {
            return 0.0;
        }
        let key = self.set_key(tables);
        if let Some(v) = self.cache.get(&key) {
            return v;
        }
        let mut order: Vec<&TableConfig> = tables.to_vec();
        order.sort_by_key(|t| self.table_token(t));
        let mut pooled = vec![0.0; EMBED_DIM];
        let models = self.models;
        for t in order {
            let memo_key = (self.id_rank[&t.id], t.dim);
            let emb = self
                .embed_memo
                .entry(memo_key)
                .or_insert_with(|| models.compute.embed(t));
            for (acc, v) in pooled.iter_mut().zip(emb.iter()) {
                *acc += v;
            }
        }
        let value = self.models.compute.predict_from_pooled(&pooled);
        self.model_evals += 1;
        self.cache.put(key, value);
        value
    }

    /// Full predicted cost of an assignment of the given (post-split) tables.
    fn assignment_cost(&mut self, tables: &[TableConfig], assign: &[usize]) -> Result<PlanCost> {
        if assign.len() != tables.len() {
            return Err(Error::InvalidPlan(format!(
                "assignment covers {} tables, expected {}",
                assign.len(),
                tables.len()
            )));
        }
        let mut groups: Vec<Vec<&TableConfig>> = vec![Vec::new(); self.devices];
        for (t, &dev) in tables.iter().zip(assign) {
            if dev >= self.devices {
                return Err(Error::InvalidPlan(format!(
                    "device index {dev} out of range {}",
                    self.devices
                )));
            }
            groups[dev].push(t);
        }
        let compute: Vec<f64> = groups.iter().map(|g| self.predict_compute(g)).collect();
        let dims: Vec<f64> = groups
            .iter()
            .map(|g| g.iter().map(|t| t.dim as f64).sum())
            .collect();
        let fwd = self.models.comm_fwd.predict(&compute, &dims)?;
        let bwd = self
            .models
            .comm_bwd
            .predict(&vec![0.0; self.devices], &dims)?;
        self.comm_evals += 2;
        self.plans_evaluated += 1;
        Ok(PlanCost::from_components(compute, fwd, bwd))
    }
}

// ── Greedy grid assignment ──────────────────────────────────────────────────

/// Grid of per-device dimension caps, from the balanced lower bound
/// (total dims / devices) up to 1.5x that bound.
fn dim_cap_grid(tables: &[TableConfig], devices: usize, points: usize) -> Vec<f64> {
    let total: f64 = tables.iter().map(|t| t.dim as f64).sum();
    let lo = total / devices as f64;
    let hi = 1.5 * lo;
    if points == 1 {
        return vec![lo];
    }
    (0..points)
        .map(|k| lo + k as f64 * (hi - lo) / (points - 1) as f64)
        .collect()
}

/// Assign `tables` to devices for one dimension cap. Tables are placed in
/// descending order of predicted single-table cost; a device is a candidate
/// while its memory holds the table and its dimension sum is still strictly
/// below the cap, and among candidates the one whose predicted fused cost
/// after insertion is lowest wins. Returns `None` if some table has no
/// candidate.
fn assign_under_cap(
    ctx: &mut SearchContext,
    task: &ShardingTask,
    tables: &[TableConfig],
    order: &[usize],
    max_dim: f64,
) -> Option<Vec<usize>> {
    let devices = task.num_devices;
    let mut assign = vec![0usize; tables.len()];
    let mut dev_tables: Vec<Vec<usize>> = vec![Vec::new(); devices];
    let mut dev_dims = vec![0u64; devices];
    let mut dev_bytes = vec![0u64; devices];
    for &i in order {
        let t = &tables[i];
        let size = t.size_bytes();
        let mut best: Option<(f64, usize)> = None;
        for d in 0..devices {
            if dev_bytes[d] + size > task.mem_cap_bytes || (dev_dims[d] as f64) >= max_dim {
                continue;
            }
            let mut set: Vec<&TableConfig> = dev_tables[d].iter().map(|&j| &tables[j]).collect();
            set.push(t);
            let cost = ctx.predict_compute(&set);
            if best.map_or(true, |(bc, _)| cost < bc) {
                best = Some((cost, d));
            }
        }
        let (_, dev) = best?;
        assign[i] = dev;
        dev_tables[dev].push(i);
        dev_dims[dev] += t.dim as u64;
        dev_bytes[dev] += size;
    }
    Some(assign)
}

/// Best assignment of `tables` over the dimension-cap grid, scored end to
/// end. Returns `None` when every grid point strands some table.
pub fn greedy_grid_search(
    ctx: &mut SearchContext,
    task: &ShardingTask,
    tables: &[TableConfig],
    hyper: &SearchHyper,
) -> Result<Option<(Vec<usize>, PlanCost)>> {
    let single_costs: Vec<f64> = tables
        .iter()
        .map(|t| ctx.predict_compute(&[t]))
        .collect();
    let mut order: Vec<usize> = (0..tables.len()).collect();
    order.sort_by(|&a, &b| single_costs[b].total_cmp(&single_costs[a]).then(a.cmp(&b)));

    let mut best: Option<(Vec<usize>, PlanCost)> = None;
    for max_dim in dim_cap_grid(tables, task.num_devices, hyper.grid_points) {
        let Some(assign) = assign_under_cap(ctx, task, tables, &order, max_dim) else {
            continue;
        };
        let cost = ctx.assignment_cost(tables, &assign)?;
        if best
            .as_ref()
            .map_or(true, |(_, c)| cost.bottleneck_ms < c.bottleneck_ms)
        {
            best = Some((assign, cost));
        }
    }
    Ok(best)
}

// ── Beam search over column splits ──────────────────────────────────────────

/// Indices of split candidates: the `shortlist` splittable tables with the
/// highest predicted single-table cost, plus the `shortlist` largest by
/// bytes, deduplicated in that order.
fn split_candidates(
    ctx: &mut SearchContext,
    tables: &[TableConfig],
    shortlist: usize,
) -> Vec<usize> {
    let splittable: Vec<usize> = (0..tables.len())
        .filter(|&i| tables[i].is_splittable())
        .collect();
    let mut by_cost = splittable.clone();
    by_cost.sort_by(|&a, &b| {
        let ca = ctx.predict_compute(&[&tables[a]]);
        let cb = ctx.predict_compute(&[&tables[b]]);
        cb.total_cmp(&ca).then(a.cmp(&b))
    });
    let mut by_size = splittable;
    by_size.sort_by_key(|&i| (std::cmp::Reverse(tables[i].size_bytes()), i));

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for &i in by_cost.iter().take(shortlist).chain(by_size.iter().take(shortlist)) {
        if seen.insert(i) {
            out.push(i);
        }
    }
    out
}

struct BeamEntry {
    col: Vec<usize>,
    tables: Vec<TableConfig>,
    outcome: Option<(Vec<usize>, PlanCost)>,
    /// Ranking key for memory-infeasible entries; see `memory_pressure`.
    pressure: (u64, u64),
}

/// How far a table list is from being packable: total bytes of per-table
/// overflow beyond the device cap, then the largest single table. Infeasible
/// beam entries are ranked by this so the search keeps halving whatever
/// blocks packing instead of chasing predicted cost it cannot realize.
fn memory_pressure(tables: &[TableConfig], cap: u64) -> (u64, u64) {
    let overflow = tables
        .iter()
        .map(|t| t.size_bytes().saturating_sub(cap))
        .sum();
    let largest = tables.iter().map(|t| t.size_bytes()).max().unwrap_or(0);
    (overflow, largest)
}

/// A finished search: the best plan found (if any assignment was feasible)
/// and the evaluation counters.
#[derive(Debug)]
pub struct SearchOutcome {
    pub plan: Option<ShardingPlan>,
    pub stats: SearchStats,
}

/// Run the full planner on one task.
pub fn plan_task(
    models: &CostModelBundle,
    task: &ShardingTask,
    hyper: &SearchHyper,
    cache_enabled: bool,
) -> Result<SearchOutcome> {
    hyper.validate()?;
    let mut ctx = SearchContext::new(models, task, cache_enabled)?;

    let root_tables = task.tables.clone();
    let root_outcome = greedy_grid_search(&mut ctx, task, &root_tables, hyper)?;
    let mut best: Option<(Vec<usize>, Vec<usize>, PlanCost)> = root_outcome
        .as_ref()
        .map(|(assign, cost)| (Vec::new(), assign.clone(), cost.clone()));
    let pressure = memory_pressure(&task.tables, task.mem_cap_bytes);
    let mut beam = vec![BeamEntry {
        col: Vec::new(),
        tables: root_tables,
        outcome: root_outcome,
        pressure,
    }];

    for _ in 0..hyper.max_splits {
        let mut children: Vec<BeamEntry> = Vec::new();
        let mut seen_sets: HashSet<Vec<u64>> = HashSet::new();
        for entry in &beam {
            for c in split_candidates(&mut ctx, &entry.tables, hyper.shortlist) {
                let mut tables = entry.tables.clone();
                let (kept, twin) = tables[c].split_column_wise()?;
                tables[c] = kept;
                tables.push(twin);
                let refs: Vec<&TableConfig> = tables.iter().collect();
                if !seen_sets.insert(ctx.set_key(&refs)) {
                    continue;
                }
                let mut col = entry.col.clone();
                col.push(c);
                let outcome = greedy_grid_search(&mut ctx, task, &tables, hyper)?;
                let pressure = memory_pressure(&tables, task.mem_cap_bytes);
                children.push(BeamEntry {
                    col,
                    tables,
                    outcome,
                    pressure,
                });
            }
        }
        if children.is_empty() {
            break;
        }
        children.sort_by(|a, b| match (&a.outcome, &b.outcome) {
            (Some((_, ca)), Some((_, cb))) => ca.bottleneck_ms.total_cmp(&cb.bottleneck_ms),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.pressure.cmp(&b.pressure),
        });
        for child in &children {
            if let Some((assign, cost)) = &child.outcome {
                let better = best
                    .as_ref()
                    .map_or(true, |(_, _, bc)| cost.bottleneck_ms < bc.bottleneck_ms);
                if better {
                    best = Some((child.col.clone(), assign.clone(), cost.clone()));
                }
            }
        }
        children.truncate(hyper.beam_width);
        beam = children;
    }

    let plan = match best {
        None => None,
        Some((col, assign, cost)) => {
            let tables_after_split = apply_column_plan(&task.tables, &col)?;
            let plan = ShardingPlan {
                col,
                assign,
                predicted_cost_ms: Some(cost.bottleneck_ms),
                tables_after_split,
                hyper: Some(hyper.clone()),
                model_fingerprints: Some(models.fingerprints()),
                algorithm: "planner".into(),
            };
            validate_plan(task, &plan)?;
            Some(plan)
        }
    };
    Ok(SearchOutcome {
        plan,
        stats: ctx.stats(),
    })
}

/// Predicted cost of an arbitrary plan, using the same model paths as the
/// planner. Validates the plan first.
pub fn simulate_plan_cost(
    models: &CostModelBundle,
    task: &ShardingTask,
    plan: &ShardingPlan,
) -> Result<PlanCost> {
    validate_plan(task, plan)?;
    let mut ctx = SearchContext::new(models, task, false)?;
    let tables = apply_column_plan(&task.tables, &plan.col)?;
    ctx.assignment_cost(&tables, &plan.assign)
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
            .map(|(i, &d)| {
                TableConfig::new(format!("t{i}"), d, 10_000 + 1000 * i as u64, 4.0 + i as f64, 0.5)
            })
            .collect();
        ShardingTask {
            num_devices: devices,
            mem_cap_bytes: cap,
            tables,
        }
    }

    fn bundle(devices: usize) -> CostModelBundle {
        CostModelBundle::new_random(devices, 77)
    }

    #[test]
    fn test_cache_shares_entries_across_permutations() {
        let t = task(&[64, 32, 16], 2, u64::MAX);
        let models = bundle(2);
        let mut ctx = SearchContext::new(&models, &t, true).unwrap();
        let ab = ctx.predict_compute(&[&t.tables[0], &t.tables[1]]);
        let ba = ctx.predict_compute(&[&t.tables[1], &t.tables[0]]);
        assert_eq!(ab.to_bits(), ba.to_bits());
        assert_eq!(ctx.cache.hits(), 1);
        assert_eq!(ctx.cache.misses(), 1);
        let direct = models
            .compute
            .predict(&[t.tables[0].clone(), t.tables[1].clone()])
            .unwrap();
        assert_eq!(ab.to_bits(), direct.to_bits());
    }

    #[test]
    fn test_disabled_cache_counts_misses_only() {
        let t = task(&[64, 32], 2, u64::MAX);
        let models = bundle(2);
        let mut ctx = SearchContext::new(&models, &t, false).unwrap();
        let a = ctx.predict_compute(&[&t.tables[0]]);
        let b = ctx.predict_compute(&[&t.tables[0]]);
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(ctx.cache.hits(), 0);
        assert_eq!(ctx.cache.misses(), 2);
        assert_eq!(ctx.stats().model_evals, 2);
    }

    #[test]
    fn test_empty_device_costs_zero() {
        let t = task(&[64], 1, u64::MAX);
        let models = bundle(1);
        let mut ctx = SearchContext::new(&models, &t, true).unwrap();
        assert_eq!(ctx.predict_compute(&[]), 0.0);
    }

    #[test]
    fn test_greedy_respects_memory() {
        // two tables of 10_000 and 11_000 rows at dim 64: 2_560_000 and
        // 2_816_000 bytes; a 3 MB cap forces one table per device
        let t = task(&[64, 64], 2, 3_000_000);
        let models = bundle(2);
        let mut ctx = SearchContext::new(&models, &t, true).unwrap();
        let (assign, _) = greedy_grid_search(&mut ctx, &t, &t.tables, &SearchHyper::default())
            .unwrap()
            .unwrap();
        assert_ne!(assign[0], assign[1]);
    }

    #[test]
    fn test_greedy_reports_infeasible_when_memory_strands() {
        let t = task(&[64, 64], 2, 2_600_000);
        let models = bundle(2);
        let mut ctx = SearchContext::new(&models, &t, true).unwrap();
        // table 1 needs 2_816_000 bytes and fits nowhere
        let out = greedy_grid_search(&mut ctx, &t, &t.tables, &SearchHyper::default()).unwrap();
        assert!(out.is_none());
    }

    #[test]
    fn test_single_grid_point_uses_balanced_cap() {
        let t = task(&[32, 32, 32, 32], 2, u64::MAX);
        let models = bundle(2);
        let mut ctx = SearchContext::new(&models, &t, true).unwrap();
        let hyper = SearchHyper {
            grid_points: 1,
            ..SearchHyper::default()
        };
        let (assign, _) = greedy_grid_search(&mut ctx, &t, &t.tables, &hyper)
            .unwrap()
            .unwrap();
        // cap is 64, so each device takes exactly two tables
        for dev in 0..2 {
            let dims: u32 = assign
                .iter()
                .enumerate()
                .filter(|(_, &d)| d == dev)
                .map(|(i, _)| t.tables[i].dim)
                .sum();
            assert_eq!(dims, 64);
        }
    }

    /// Transparent reimplementation of the greedy pass that calls the public
    /// model API directly, with no cache or memo.
    fn reference_greedy(
        models: &CostModelBundle,
        task: &ShardingTask,
        hyper: &SearchHyper,
    ) -> Option<(Vec<usize>, f64)> {
        let tables = &task.tables;
        let singles: Vec<f64> = tables
            .iter()
            .map(|t| models.compute.predict(std::slice::from_ref(t)).unwrap())
            .collect();
        let mut order: Vec<usize> = (0..tables.len()).collect();
        order.sort_by(|&a, &b| singles[b].total_cmp(&singles[a]).then(a.cmp(&b)));
        let total: f64 = tables.iter().map(|t| t.dim as f64).sum();
        let lo = total / task.num_devices as f64;
        let mut best: Option<(Vec<usize>, f64)> = None;
        for k in 0..hyper.grid_points {
            let cap = if hyper.grid_points == 1 {
                lo
            } else {
                lo + k as f64 * (1.5 * lo - lo) / (hyper.grid_points - 1) as f64
            };
            let mut assign = vec![0usize; tables.len()];
            let mut sets: Vec<Vec<TableConfig>> = vec![Vec::new(); task.num_devices];
            let mut dims = vec![0u64; task.num_devices];
            let mut bytes = vec![0u64; task.num_devices];
            let mut ok = true;
            for &i in &order {
                let t = &tables[i];
                let mut chosen: Option<(f64, usize)> = None;
                for d in 0..task.num_devices {
                    if bytes[d] + t.size_bytes() > task.mem_cap_bytes
                        || (dims[d] as f64) >= cap
                    {
                        continue;
                    }
                    let mut set = sets[d].clone();
                    set.push(t.clone());
                    let c = models.compute.predict(&set).unwrap();
                    if chosen.map_or(true, |(bc, _)| c < bc) {
                        chosen = Some((c, d));
                    }
                }
                match chosen {
                    None => {
                        ok = false;
                        break;
                    }
                    Some((_, d)) => {
                        assign[i] = d;
                        sets[d].push(t.clone());
                        dims[d] += t.dim as u64;
                        bytes[d] += t.size_bytes();
                    }
                }
            }
            if !ok {
                continue;
            }
            let compute: Vec<f64> = sets
                .iter()
                .map(|s| {
                    if s.is_empty() {
                        0.0
                    } else {
                        models.compute.predict(s).unwrap()
                    }
                })
                .collect();
            let ddims: Vec<f64> = sets
                .iter()
                .map(|s| s.iter().map(|t| t.dim as f64).sum())
                .collect();
            let fwd = models.comm_fwd.predict(&compute, &ddims).unwrap();
            let bwd = models
                .comm_bwd
                .predict(&vec![0.0; task.num_devices], &ddims)
                .unwrap();
            let bottleneck = compute
                .iter()
                .zip(&fwd)
                .zip(&bwd)
                .map(|((c, f), b)| c + f + b)
                .fold(f64::NEG_INFINITY, f64::max);
            if best.as_ref().map_or(true, |(_, bb)| bottleneck < *bb) {
                best = Some((assign, bottleneck));
            }
        }
        best
    }

    #[test]
    fn test_greedy_matches_reference_implementation() {
        let dims_sets: [&[u32]; 4] = [
            &[64, 32, 16, 8, 4],
            &[128, 128, 4, 4],
            &[32, 32, 32, 32, 32, 32],
            &[64, 16],
        ];
        let hyper = SearchHyper::default();
        for dims in dims_sets {
            let t = task(dims, 2, u64::MAX);
            let models = bundle(2);
            let mut ctx = SearchContext::new(&models, &t, true).unwrap();
            let fast = greedy_grid_search(&mut ctx, &t, &t.tables, &hyper)
                .unwrap()
                .unwrap();
            let slow = reference_greedy(&models, &t, &hyper).unwrap();
            assert_eq!(fast.0, slow.0, "assignment mismatch for {dims:?}");
            assert_eq!(
                fast.1.bottleneck_ms.to_bits(),
                slow.1.to_bits(),
                "cost mismatch for {dims:?}"
            );
        }
    }

    #[test]
    fn test_plan_task_output_is_valid_and_reproducible() {
        let t = task(&[64, 64, 32, 16, 8, 4], 2, u64::MAX);
        let models = bundle(2);
        let hyper = SearchHyper {
            max_splits: 3,
            ..SearchHyper::default()
        };
        let a = plan_task(&models, &t, &hyper, true).unwrap();
        let b = plan_task(&models, &t, &hyper, true).unwrap();
        let pa = a.plan.unwrap();
        let pb = b.plan.unwrap();
        assert_eq!(
            serde_json::to_string(&pa).unwrap(),
            serde_json::to_string(&pb).unwrap()
        );
        validate_plan(&t, &pa).unwrap();
        let recomputed = simulate_plan_cost(&models, &t, &pa).unwrap();
        assert_eq!(
            recomputed.bottleneck_ms.to_bits(),
            pa.predicted_cost_ms.unwrap().to_bits()
        );
        assert_eq!(pa.algorithm, "planner");
        assert_eq!(pa.hyper.as_ref().unwrap(), &hyper);
    }

    #[test]
    fn test_cache_toggle_does_not_change_the_plan() {
        let t = task(&[64, 64, 32, 16, 8, 4, 128, 8], 2, u64::MAX);
        let models = bundle(2);
        let hyper = SearchHyper {
            max_splits: 2,
            ..SearchHyper::default()
        };
        let cached = plan_task(&models, &t, &hyper, true).unwrap();
        let uncached = plan_task(&models, &t, &hyper, false).unwrap();
        assert_eq!(
            serde_json::to_string(&cached.plan.unwrap()).unwrap(),
            serde_json::to_string(&uncached.plan.unwrap()).unwrap()
        );
        assert_eq!(uncached.stats.cache_hits, 0);
        assert!(cached.stats.cache_hits > 0);
        assert!(uncached.stats.model_evals > cached.stats.model_evals);
    }

    #[test]
    fn test_splitting_never_hurts_the_best_plan() {
        let t = task(&[128, 4, 4, 4], 2, u64::MAX);
        let models = bundle(2);
        let no_beam = SearchHyper {
            max_splits: 0,
            ..SearchHyper::default()
        };
        let with_beam = SearchHyper {
            max_splits: 4,
            ..SearchHyper::default()
        };
        let base = plan_task(&models, &t, &no_beam, true).unwrap();
        let deep = plan_task(&models, &t, &with_beam, true).unwrap();
        let base_cost = base.plan.unwrap().predicted_cost_ms.unwrap();
        let deep_cost = deep.plan.unwrap().predicted_cost_ms.unwrap();
        assert!(deep_cost <= base_cost);
    }

    #[test]
    fn test_beam_rescues_memory_infeasible_root() {
        // one 6_400_000-byte table against a 4 MB cap: feasible only after
        // a split
        let tables = vec![
            TableConfig::new("big", 64, 25_000, 4.0, 0.5),
            TableConfig::new("small", 4, 1000, 2.0, 0.1),
        ];
        let t = ShardingTask {
            num_devices: 2,
            mem_cap_bytes: 4_000_000,
            tables,
        };
        let models = bundle(2);
        let out = plan_task(&models, &t, &SearchHyper::default(), true).unwrap();
        let plan = out.plan.expect("split should rescue the task");
        assert_eq!(plan.col, vec![0]);
        validate_plan(&t, &plan).unwrap();

        let no_beam = SearchHyper {
            max_splits: 0,
            ..SearchHyper::default()
        };
        let stuck = plan_task(&models, &t, &no_beam, true).unwrap();
        assert!(stuck.plan.is_none());
    }

    #[test]
    fn test_beam_keeps_halving_the_memory_blocker() {
        // the 12.8 MB table needs three splits before any piece fits under
        // the 4 MB cap; with beam_width 1 the search survives only if
        // infeasible levels keep the child that shrank the largest table
        let tables = vec![
            TableConfig::new("blocker", 64, 50_000, 2.0, 0.1),
            TableConfig::new("d0", 64, 1000, 9.0, 0.3),
            TableConfig::new("d1", 64, 1000, 7.0, 0.7),
            TableConfig::new("d2", 64, 1000, 5.0, 1.1),
        ];
        let t = ShardingTask {
            num_devices: 4,
            mem_cap_bytes: 4_000_000,
            tables,
        };
        let models = bundle(4);
        let hyper = SearchHyper {
            beam_width: 1,
            max_splits: 4,
            ..SearchHyper::default()
        };
        let out = plan_task(&models, &t, &hyper, true).unwrap();
        let plan = out.plan.expect("beam should shrink the blocker until it packs");
        assert!(plan.col.len() >= 3);
        validate_plan(&t, &plan).unwrap();
    }

    #[test]
    fn test_unsplittable_tables_stop_the_beam() {
        let t = task(&[4, 4], 2, u64::MAX);
        let models = bundle(2);
        let out = plan_task(&models, &t, &SearchHyper::default(), true).unwrap();
        let plan = out.plan.unwrap();
        assert!(plan.col.is_empty());
    }

    #[test]
    fn test_split_candidates_rank_and_dedup() {
        let tables = vec![
            TableConfig::new("a", 4, 1000, 2.0, 0.1),
            TableConfig::new("b", 64, 1000, 2.0, 0.1),
            TableConfig::new("c", 32, 9_000_000, 2.0, 0.1),
        ];
        let t = ShardingTask {
            num_devices: 2,
            mem_cap_bytes: u64::MAX,
            tables,
        };
        let models = bundle(2);
        let mut ctx = SearchContext::new(&models, &t, true).unwrap();
        let cands = split_candidates(&mut ctx, &t.tables, 1);
        // table 0 is unsplittable; at most one per ranking, deduplicated
        assert!(!cands.contains(&0));
        assert!(!cands.is_empty() && cands.len() <= 2);
        let wide = split_candidates(&mut ctx, &t.tables, 10);
        assert_eq!(wide.len(), 2);
    }
}
