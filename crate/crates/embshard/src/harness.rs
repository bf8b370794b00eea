//! Evaluation harness: run sharding algorithms over task sets, score the
//! resulting plans with the analytical oracle and the learned models, and
//! emit JSON and CSV reports.
//!
//! A failed task (no feasible plan) is data, not an error: it lowers the
//! success rate and contributes nothing to the cost means. Wall times cover
//! planning only, never model loading or plan scoring, and can be zeroed
//! with `omit_timing` so reports of deterministic runs are byte-identical.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{greedy_shard, random_shard, Heuristic};
use crate::error::{Error, Result};
use crate::nncost::{CostModelBundle, ModelFingerprints};
use crate::oracle::{oracle_eval_plan, OracleParams};
use crate::search::{plan_task, simulate_plan_cost, SearchHyper, SearchStats};
use crate::tables::ShardingTask;

/// Every sharding algorithm the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Planner,
    Random,
    Size,
    Dim,
    Lookup,
    SizeLookup,
}

impl Algorithm {
    pub fn all() -> [Algorithm; 6] {
        [
            Algorithm::Planner,
            Algorithm::Random,
            Algorithm::Size,
            Algorithm::Dim,
            Algorithm::Lookup,
            Algorithm::SizeLookup,
        ]
    }

    pub fn baselines() -> [Algorithm; 5] {
        [
            Algorithm::Random,
            Algorithm::Size,
            Algorithm::Dim,
            Algorithm::Lookup,
            Algorithm::SizeLookup,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Planner => "planner",
            Algorithm::Random => "random",
            Algorithm::Size => "size",
            Algorithm::Dim => "dim",
            Algorithm::Lookup => "lookup",
            Algorithm::SizeLookup => "size_lookup",
        }
    }

    pub fn heuristic(&self) -> Option<Heuristic> {
        match self {
            Algorithm::Size => Some(Heuristic::Size),
            Algorithm::Dim => Some(Heuristic::Dim),
            Algorithm::Lookup => Some(Heuristic::Lookup),
            Algorithm::SizeLookup => Some(Heuristic::SizeLookup),
            _ => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::all()
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm {s:?}")))
    }
}

/// Harness-level knobs shared across tasks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalOptions {
    pub hyper: SearchHyper,
    pub cache_enabled: bool,
    /// Base seed for the random baseline; task `i` uses `random_seed + i`.
    pub random_seed: u64,
    /// Record all wall times as zero so repeated runs serialize identically.
    pub omit_timing: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            hyper: SearchHyper::default(),
            cache_enabled: true,
            random_seed: 0,
            omit_timing: false,
        }
    }
}

/// One algorithm's outcome on one task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_index: usize,
    pub success: bool,
    pub wall_ms: f64,
    pub splits: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_bottleneck_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_bottleneck_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stats: Option<SearchStats>,
}

/// One algorithm's outcome over a task set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub algorithm: Algorithm,
    pub tasks: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean oracle bottleneck over this algorithm's successes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_oracle_bottleneck_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_model_bottleneck_ms: Option<f64>,
    /// Mean of |model - oracle| / oracle over successes scored by both.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_rel_gap: Option<f64>,
    pub total_wall_ms: f64,
    pub oracle_params: OracleParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hyper: Option<SearchHyper>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_fingerprints: Option<ModelFingerprints>,
    /// Search counters summed over tasks (planner only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub search_totals: Option<SearchStats>,
    pub results: Vec<TaskResult>,
}

fn add_stats(total: &mut SearchStats, s: &SearchStats) {
    total.plans_evaluated += s.plans_evaluated;
    total.model_evals += s.model_evals;
    total.comm_evals += s.comm_evals;
    total.cache_hits += s.cache_hits;
    total.cache_misses += s.cache_misses;
}

/// Run one algorithm over every task and aggregate the results.
pub fn evaluate(
    tasks: &[ShardingTask],
    algorithm: Algorithm,
    params: &OracleParams,
    models: Option<&CostModelBundle>,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if tasks.is_empty() {
        return Err(Error::InvalidArgument("no tasks to evaluate".into()));
    }
    if algorithm == Algorithm::Planner && models.is_none() {
        return Err(Error::InvalidArgument(
            "the planner needs trained cost models".into(),
        ));
    }

    let mut results = Vec::with_capacity(tasks.len());
    let mut search_totals = (algorithm == Algorithm::Planner).then(SearchStats::default);
    for (i, task) in tasks.iter().enumerate() {
        let start = Instant::now();
        let (plan, stats) = match algorithm {
            Algorithm::Planner => {
                let out = plan_task(models.unwrap(), task, &opts.hyper, opts.cache_enabled)?;
                (out.plan, Some(out.stats))
            }
            Algorithm::Random => (
                random_shard(task, opts.random_seed.wrapping_add(i as u64))?,
                None,
            ),
            _ => (greedy_shard(task, algorithm.heuristic().unwrap())?, None),
        };
        let wall_ms = if opts.omit_timing {
            0.0
        } else {
            start.elapsed().as_secs_f64() * 1000.0
        };
        if let (Some(total), Some(s)) = (search_totals.as_mut(), stats.as_ref()) {
            add_stats(total, s);
        }
        let oracle_bottleneck_ms = match &plan {
            Some(p) => Some(oracle_eval_plan(params, task, p)?.bottleneck_ms),
            None => None,
        };
        let model_bottleneck_ms = match (&plan, models) {
            (Some(p), Some(m)) => Some(simulate_plan_cost(m, task, p)?.bottleneck_ms),
            _ => None,
        };
        results.push(TaskResult {
            task_index: i,
            success: plan.is_some(),
            wall_ms,
            splits: plan.as_ref().map_or(0, |p| p.col.len()),
            oracle_bottleneck_ms,
            model_bottleneck_ms,
            stats,
        });
    }

    let successes = results.iter().filter(|r| r.success).count();
    let mean = |vals: Vec<f64>| -> Option<f64> {
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    let mean_oracle_bottleneck_ms = mean(
        results
            .iter()
            .filter_map(|r| r.oracle_bottleneck_ms)
            .collect(),
    );
    let mean_model_bottleneck_ms = mean(
        results
            .iter()
            .filter_map(|r| r.model_bottleneck_ms)
            .collect(),
    );
    let mean_rel_gap = mean(
        results
            .iter()
            .filter_map(|r| match (r.model_bottleneck_ms, r.oracle_bottleneck_ms) {
                (Some(m), Some(o)) => Some((m - o).abs() / o),
                _ => None,
            })
            .collect(),
    );
    Ok(EvalReport {
        algorithm,
        tasks: tasks.len(),
        successes,
        success_rate: successes as f64 / tasks.len() as f64,
        mean_oracle_bottleneck_ms,
        mean_model_bottleneck_ms,
        mean_rel_gap,
        total_wall_ms: results.iter().map(|r| r.wall_ms).sum(),
        oracle_params: params.clone(),
        hyper: (algorithm == Algorithm::Planner).then(|| opts.hyper.clone()),
        model_fingerprints: models.map(|m| m.fingerprints()),
        search_totals,
        results,
    })
}

/// Run several algorithms over the same tasks.
pub fn compare(
    tasks: &[ShardingTask],
    algorithms: &[Algorithm],
    params: &OracleParams,
    models: Option<&CostModelBundle>,
    opts: &EvalOptions,
) -> Result<Vec<EvalReport>> {
    algorithms
        .iter()
        .map(|&a| evaluate(tasks, a, params, models, opts))
        .collect()
}

/// Per-report mean oracle bottleneck restricted to tasks every report
/// solved, so algorithms with different failure sets compare fairly.
/// `None` when the common subset is empty.
pub fn common_success_means(reports: &[EvalReport]) -> Vec<Option<f64>> {
    if reports.is_empty() {
        return Vec::new();
    }
    let tasks = reports[0].tasks;
    let common: Vec<usize> = (0..tasks)
        .filter(|&i| {
            reports
                .iter()
                .all(|r| r.results.get(i).is_some_and(|t| t.success))
        })
        .collect();
    reports
        .iter()
        .map(|r| {
            if common.is_empty() {
                None
            } else {
                Some(
                    common
                        .iter()
                        .map(|&i| r.results[i].oracle_bottleneck_ms.unwrap())
                        .sum::<f64>()
                        / common.len() as f64,
                )
            }
        })
        .collect()
}

/// A report with the configuration label that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledReport {
    pub label: String,
    pub report: EvalReport,
}

/// Run the planner with each component disabled in turn: `full` is the
/// reference, `no_beam` stops all splitting, `no_grid` collapses the
/// dimension-cap grid to the balanced point, and `no_cache` disables
/// prediction reuse.
pub fn ablate(
    tasks: &[ShardingTask],
    params: &OracleParams,
    models: &CostModelBundle,
    opts: &EvalOptions,
) -> Result<Vec<LabeledReport>> {
    let mut variants: Vec<(String, EvalOptions)> = Vec::new();
    variants.push(("full".into(), opts.clone()));
    let mut no_beam = opts.clone();
    no_beam.hyper.max_splits = 0;
    variants.push(("no_beam".into(), no_beam));
    let mut no_grid = opts.clone();
    no_grid.hyper.grid_points = 1;
    variants.push(("no_grid".into(), no_grid));
    let mut no_cache = opts.clone();
    no_cache.cache_enabled = false;
    variants.push(("no_cache".into(), no_cache));

    variants
        .into_iter()
        .map(|(label, v)| {
            Ok(LabeledReport {
                label,
                report: evaluate(tasks, Algorithm::Planner, params, Some(models), &v)?,
            })
        })
        .collect()
}

/// Search hyperparameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Shortlist,
    BeamWidth,
    MaxSplits,
    GridPoints,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Shortlist => "shortlist",
            SweepParam::BeamWidth => "beam_width",
            SweepParam::MaxSplits => "max_splits",
            SweepParam::GridPoints => "grid_points",
        }
    }

    fn apply(&self, hyper: &mut SearchHyper, value: usize) {
        match self {
            SweepParam::Shortlist => hyper.shortlist = value,
            SweepParam::BeamWidth => hyper.beam_width = value,
            SweepParam::MaxSplits => hyper.max_splits = value,
            SweepParam::GridPoints => hyper.grid_points = value,
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SweepParam::Shortlist,
            SweepParam::BeamWidth,
            SweepParam::MaxSplits,
            SweepParam::GridPoints,
        ]
        .into_iter()
        .find(|p| p.name() == s)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown sweep parameter {s:?}")))
    }
}

/// Evaluate the planner across several values of one hyperparameter.
pub fn sweep(
    tasks: &[ShardingTask],
    params: &OracleParams,
    models: &CostModelBundle,
    opts: &EvalOptions,
    param: SweepParam,
    values: &[usize],
) -> Result<Vec<LabeledReport>> {
    values
        .iter()
        .map(|&v| {
            let mut variant = opts.clone();
            param.apply(&mut variant.hyper, v);
            Ok(LabeledReport {
                label: format!("{}={v}", param.name()),
                report: evaluate(tasks, Algorithm::Planner, params, Some(models), &variant)?,
            })
        })
        .collect()
}

// ── Report files ────────────────────────────────────────────────────────────

pub fn save_reports_json(path: &Path, reports: &[LabeledReport]) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(reports)?)?;
    Ok(())
}

pub fn load_reports_json(path: &Path) -> Result<Vec<LabeledReport>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Flatten reports into one CSV row per (label, task).
pub fn write_reports_csv(path: &Path, reports: &[LabeledReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "label",
        "algorithm",
        "task",
        "success",
        "splits",
        "wall_ms",
        "oracle_bottleneck_ms",
        "model_bottleneck_ms",
        "cache_hits",
        "cache_misses",
        "model_evals",
        "plans_evaluated",
    ])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for lr in reports {
        for r in &lr.report.results {
            let stats = r.stats.as_ref();
            w.write_record([
                lr.label.clone(),
                lr.report.algorithm.name().to_string(),
                r.task_index.to_string(),
                r.success.to_string(),
                r.splits.to_string(),
                r.wall_ms.to_string(),
                opt(r.oracle_bottleneck_ms),
                opt(r.model_bottleneck_ms),
                stats.map_or(String::new(), |s| s.cache_hits.to_string()),
                stats.map_or(String::new(), |s| s.cache_misses.to_string()),
                stats.map_or(String::new(), |s| s.model_evals.to_string()),
                stats.map_or(String::new(), |s| s.plans_evaluated.to_string()),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

// ── Tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::oracle_eval_plan;
    use crate::tables::TableConfig;

    fn tasks() -> Vec<ShardingTask> {
        let mk = |dims: &[u32], devices: usize| -> ShardingTask {
            let tables = dims
                .iter()
                .enumerate()
                .map(|(i, &d)| {
                    TableConfig::new(format!("t{i}"), d, 5000 + 100 * i as u64, 3.0, 0.4)
                })
                .collect();
            ShardingTask {
                num_devices: devices,
                mem_cap_bytes: u64::MAX,
                tables,
            }
        };
        vec![
            mk(&[64, 32, 16, 8], 2),
            mk(&[128, 8, 4, 4, 4], 2),
            mk(&[32, 32, 32, 32], 2),
        ]
    }

    fn models() -> CostModelBundle {
        CostModelBundle::new_random(2, 5)
    }

    #[test]
    fn test_evaluate_baseline_matches_direct_oracle() {
        let tasks = tasks();
        let params = OracleParams::default();
        let report = evaluate(
            &tasks,
            Algorithm::Dim,
            &params,
            None,
            &EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(report.successes, 3);
        assert_eq!(report.success_rate, 1.0);
        for (task, r) in tasks.iter().zip(&report.results) {
            let plan = greedy_shard(task, Heuristic::Dim).unwrap().unwrap();
            let direct = oracle_eval_plan(&params, task, &plan).unwrap();
            assert_eq!(r.oracle_bottleneck_ms.unwrap(), direct.bottleneck_ms);
            assert!(r.model_bottleneck_ms.is_none());
        }
        assert!(report.mean_oracle_bottleneck_ms.is_some());
        assert!(report.search_totals.is_none());
    }

    #[test]
    fn test_evaluate_planner_records_stats_and_model_costs() {
        let tasks = tasks();
        let models = models();
        let opts = EvalOptions {
            hyper: SearchHyper {
                max_splits: 2,
                ..SearchHyper::default()
            },
            ..EvalOptions::default()
        };
        let report = evaluate(
            &tasks,
            Algorithm::Planner,
            &OracleParams::default(),
            Some(&models),
            &opts,
        )
        .unwrap();
        assert_eq!(report.successes, 3);
        let totals = report.search_totals.unwrap();
        assert!(totals.plans_evaluated > 0);
        assert!(totals.model_evals > 0);
        for r in &report.results {
            assert!(r.stats.is_some());
            assert!(r.model_bottleneck_ms.is_some());
            assert!(r.oracle_bottleneck_ms.is_some());
        }
        assert!(report.mean_rel_gap.is_some());
        assert_eq!(report.model_fingerprints.unwrap(), models.fingerprints());
    }

    #[test]
    fn test_evaluate_planner_requires_models() {
        assert!(evaluate(
            &tasks(),
            Algorithm::Planner,
            &OracleParams::default(),
            None,
            &EvalOptions::default(),
        )
        .is_err());
    }

    #[test]
    fn test_omit_timing_makes_reports_byte_identical() {
        let tasks = tasks();
        let models = models();
        let opts = EvalOptions {
            omit_timing: true,
            hyper: SearchHyper {
                max_splits: 1,
                ..SearchHyper::default()
            },
            ..EvalOptions::default()
        };
        let run = || {
            let report = evaluate(
                &tasks,
                Algorithm::Planner,
                &OracleParams::default(),
                Some(&models),
                &opts,
            )
            .unwrap();
            serde_json::to_string(&report).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn test_compare_and_common_subset_means() {
        let tasks = tasks();
        let params = OracleParams::default();
        let reports = compare(
            &tasks,
            &[Algorithm::Dim, Algorithm::Size],
            &params,
            None,
            &EvalOptions::default(),
        )
        .unwrap();
        let means = common_success_means(&reports);
        assert_eq!(means.len(), 2);
        // all tasks succeed for both, so the common mean is the plain mean
        for (m, r) in means.iter().zip(&reports) {
            assert_eq!(m.unwrap(), r.mean_oracle_bottleneck_ms.unwrap());
        }
    }

    #[test]
    fn test_ablate_produces_expected_variants() {
        let tasks = tasks();
        let models = models();
        let opts = EvalOptions {
            hyper: SearchHyper {
                max_splits: 1,
                ..SearchHyper::default()
            },
            ..EvalOptions::default()
        };
        let reports = ablate(&tasks, &OracleParams::default(), &models, &opts).unwrap();
        let labels: Vec<&str> = reports.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ["full", "no_beam", "no_grid", "no_cache"]);
        assert_eq!(reports[1].report.hyper.as_ref().unwrap().max_splits, 0);
        assert_eq!(reports[2].report.hyper.as_ref().unwrap().grid_points, 1);
        let no_cache = reports[3].report.search_totals.unwrap();
        assert_eq!(no_cache.cache_hits, 0);
        let full = reports[0].report.search_totals.unwrap();
        assert!(full.cache_hits > 0);
        // disabling the cache must not change any cost
        for (a, b) in reports[0]
            .report
            .results
            .iter()
            .zip(&reports[3].report.results)
        {
            assert_eq!(
                a.model_bottleneck_ms.unwrap().to_bits(),
                b.model_bottleneck_ms.unwrap().to_bits()
            );
        }
    }

    #[test]
    fn test_sweep_labels_and_applies_values() {
        let tasks = tasks();
        let models = models();
        let reports = sweep(
            &tasks,
            &OracleParams::default(),
            &models,
            &EvalOptions::default(),
            SweepParam::MaxSplits,
            &[0, 2],
        )
        .unwrap();
        assert_eq!(reports[0].label, "max_splits=0");
        assert_eq!(reports[1].label, "max_splits=2");
        assert_eq!(reports[0].report.hyper.as_ref().unwrap().max_splits, 0);
        assert_eq!(reports[1].report.hyper.as_ref().unwrap().max_splits, 2);
    }

    #[test]
    fn test_report_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let tasks = tasks();
        let report = evaluate(
            &tasks,
            Algorithm::Size,
            &OracleParams::default(),
            None,
            &EvalOptions {
                omit_timing: true,
                ..EvalOptions::default()
            },
        )
        .unwrap();
        let labeled = vec![LabeledReport {
            label: "full".into(),
            report,
        }];
        let json_path = dir.path().join("report.json");
        save_reports_json(&json_path, &labeled).unwrap();
        let loaded = load_reports_json(&json_path).unwrap();
        assert_eq!(
            serde_json::to_string(&labeled).unwrap(),
            serde_json::to_string(&loaded).unwrap()
        );

        let csv_path = dir.path().join("report.csv");
        write_reports_csv(&csv_path, &labeled).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + tasks.len());
        assert!(lines[0].starts_with("label,algorithm,task,success"));
    }

    #[test]
    fn test_algorithm_parsing() {
        assert_eq!(
            "size_lookup".parse::<Algorithm>().unwrap(),
            Algorithm::SizeLookup
        );
        assert!("nope".parse::<Algorithm>().is_err());
        assert_eq!(
            "grid_points".parse::<SweepParam>().unwrap(),
            SweepParam::GridPoints
        );
    }
}
