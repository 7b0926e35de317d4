//! Run orchestration: fans (horizon, seed, replica) tasks across a worker
//! pool, merges results deterministically by task index, and persists
//! results.csv, runs.jsonl, and summary.json.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::bandit::{run_bandit, BanditOptions};
use crate::cost::Cost;
use crate::error::{config, Result};
use crate::ftrl::{run_full_information, FullInfoOptions};
use crate::ledger::RegretLedger;
use crate::model::ConstraintFamily;
use crate::na::{run_na, NaOptions, NaThresholds};

use super::config::{Algorithm, ExperimentConfig};

pub const RESULTS_COLUMNS: &str =
    "seed,replica,t,round,explore,mistake,failure,algo_cost,frac_loss,bench_cost,cum_regret";

/// Per-run aggregates; one JSON line each in runs.jsonl.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub algorithm: String,
    pub seed: u64,
    pub replica: usize,
    pub t: usize,
    pub rounds: usize,
    pub explores: usize,
    pub mistakes: usize,
    pub failures: usize,
    pub avg_algo_cost: Option<f64>,
    pub avg_frac_loss: Option<f64>,
    pub avg_bench_cost: Option<f64>,
    pub avg_regret: Option<f64>,
    pub avg_realized_regret: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HorizonSummary {
    pub t: usize,
    pub runs: usize,
    pub mean_avg_regret: Option<f64>,
    pub stddev_avg_regret: Option<f64>,
    pub mean_avg_algo_cost: Option<f64>,
    pub mean_avg_bench_cost: Option<f64>,
    /// mean over runs of avg algorithm cost / avg benchmark cost
    pub mean_cost_ratio: Option<f64>,
    pub mean_explores: f64,
    pub mean_mistakes: f64,
    pub mean_failures: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub algorithm: String,
    pub per_horizon: Vec<HorizonSummary>,
    /// Least-squares slope of ln(mean regret) against ln(t); needs two or
    /// more horizons with positive mean regret.
    pub loglog_slope: Option<f64>,
}

pub struct RunArtifacts {
    pub results_path: PathBuf,
    pub runs_path: PathBuf,
    pub summary_path: PathBuf,
    pub records: Vec<RunRecord>,
    pub summary: RunSummary,
}

struct TaskOutput {
    csv: String,
    record: RunRecord,
}

/// Distinct per-replica randomness while replica 0 reproduces the seed
/// itself.
pub fn replica_seed(seed: u64, replica: usize) -> u64 {
    seed ^ (replica as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn thread_cap(tasks: usize) -> usize {
    let configured = std::env::var("PB_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&v| v >= 1);
    let fallback = std::thread::available_parallelism().map(|v| v.get()).unwrap_or(1);
    configured.unwrap_or(fallback).min(tasks.max(1))
}

fn run_one(
    cfg: &ExperimentConfig,
    family: &ConstraintFamily,
    horizon: Option<usize>,
    seed: u64,
    replica: usize,
) -> Result<(usize, RegretLedger)> {
    let (seq, _) = cfg.instance.realize(horizon, seed)?;
    family.validate(seq.n)?;
    let run_seed = replica_seed(seed, replica);
    let p = &cfg.params;
    let ledger = match cfg.algorithm {
        Algorithm::FullInfo => {
            let mut opts = FullInfoOptions::default();
            opts.eta = p.eta;
            opts.benchmark = cfg.benchmark.clone();
            opts.collect_iterates = p.collect_iterates;
            if let Some(s) = p.stopping {
                opts.stopping = s;
            }
            run_full_information(&seq, family, &opts, run_seed)?
        }
        Algorithm::Bandit => {
            let mut opts = BanditOptions::default();
            opts.eta = p.eta;
            opts.interval = p.interval_length;
            opts.smoothness = p.smoothness;
            opts.alternate_interval_formula = p.alternate_interval_formula;
            opts.benchmark = cfg.benchmark.clone();
            opts.collect_iterates = p.collect_iterates;
            if let Some(s) = p.stopping {
                opts.stopping = s;
            }
            run_bandit(&seq, family, &opts, run_seed)?
        }
        Algorithm::Na => {
            let opts = NaOptions {
                explore_probability: p.explore_probability,
                thresholds: NaThresholds {
                    beta: p.na_beta.unwrap_or_else(|| NaThresholds::default().beta),
                    alpha: p.na_alpha.unwrap_or_else(|| NaThresholds::default().alpha),
                },
                benchmark: cfg.benchmark.clone(),
                ..NaOptions::default()
            };
            run_na(&seq, family, &opts, run_seed)?
        }
    };
    Ok((seq.len(), ledger))
}

fn cost_field(c: Cost) -> String {
    match c {
        Cost::Finite(v) => format!("{v}"),
        Cost::Infinite => "inf".to_string(),
    }
}

fn csv_rows(seed: u64, replica: usize, t: usize, ledger: &RegretLedger) -> String {
    let mut out = String::new();
    let mut cum: Option<f64> = Some(0.0);
    for row in &ledger.rows {
        let eff = row.effective_cost();
        cum = match (cum, eff.finite(), row.bench_cost.and_then(|b| b.finite())) {
            (Some(acc), Some(e), Some(b)) => Some(acc + e - b),
            _ => None,
        };
        let frac = row.frac_loss.map(|v| format!("{v}")).unwrap_or_default();
        let bench = row.bench_cost.map(cost_field).unwrap_or_default();
        let cum_s = cum.map(|v| format!("{v}")).unwrap_or_default();
        out.push_str(&format!(
            "{seed},{replica},{t},{},{},{},{},{},{frac},{bench},{cum_s}\n",
            row.round,
            row.explore as u8,
            row.mistake as u8,
            row.failure as u8,
            cost_field(row.algo_cost),
        ));
    }
    out
}

fn make_record(cfg: &ExperimentConfig, seed: u64, replica: usize, t: usize, ledger: &RegretLedger) -> RunRecord {
    RunRecord {
        config_hash: format!("{:016x}", cfg.content_hash()),
        algorithm: cfg.algorithm.name().to_string(),
        seed,
        replica,
        t,
        rounds: ledger.rows.len(),
        explores: ledger.explores(),
        mistakes: ledger.mistakes(),
        failures: ledger.failures(),
        avg_algo_cost: ledger.avg_algo_cost(),
        avg_frac_loss: ledger.avg_frac_loss(),
        avg_bench_cost: ledger.avg_bench_cost(),
        avg_regret: ledger.avg_regret(),
        avg_realized_regret: ledger.avg_realized_regret(),
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn stddev(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    if values.len() < 2 {
        return Some(0.0);
    }
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    Some(var.sqrt())
}

/// Least-squares slope of ln(y) on ln(x); None unless two or more points
/// with positive coordinates.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logged: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logged.len() < 2 {
        return None;
    }
    let n = logged.len() as f64;
    let sx: f64 = logged.iter().map(|p| p.0).sum();
    let sy: f64 = logged.iter().map(|p| p.1).sum();
    let sxx: f64 = logged.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = logged.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    (denom.abs() > 1e-12).then(|| (n * sxy - sx * sy) / denom)
}

fn summarize(cfg: &ExperimentConfig, records: &[RunRecord]) -> RunSummary {
    let mut horizons: Vec<usize> = records.iter().map(|r| r.t).collect();
    horizons.sort_unstable();
    horizons.dedup();
    let mut per_horizon = Vec::new();
    for &t in &horizons {
        let batch: Vec<&RunRecord> = records.iter().filter(|r| r.t == t).collect();
        let regrets: Vec<f64> = batch.iter().filter_map(|r| r.avg_regret).collect();
        let algo: Vec<f64> = batch.iter().filter_map(|r| r.avg_algo_cost).collect();
        let bench: Vec<f64> = batch.iter().filter_map(|r| r.avg_bench_cost).collect();
        let ratios: Vec<f64> = batch
            .iter()
            .filter_map(|r| match (r.avg_algo_cost, r.avg_bench_cost) {
                (Some(a), Some(b)) if b > 0.0 => Some(a / b),
                _ => None,
            })
            .collect();
        per_horizon.push(HorizonSummary {
            t,
            runs: batch.len(),
            mean_avg_regret: mean(&regrets),
            stddev_avg_regret: stddev(&regrets),
            mean_avg_algo_cost: mean(&algo),
            mean_avg_bench_cost: mean(&bench),
            mean_cost_ratio: mean(&ratios),
            mean_explores: batch.iter().map(|r| r.explores as f64).sum::<f64>()
                / batch.len() as f64,
            mean_mistakes: batch.iter().map(|r| r.mistakes as f64).sum::<f64>()
                / batch.len() as f64,
            mean_failures: batch.iter().map(|r| r.failures as f64).sum::<f64>()
                / batch.len() as f64,
        });
    }
    let points: Vec<(f64, f64)> = per_horizon
        .iter()
        .filter_map(|h| h.mean_avg_regret.map(|r| (h.t as f64, r)))
        .collect();
    RunSummary {
        config_hash: format!("{:016x}", cfg.content_hash()),
        algorithm: cfg.algorithm.name().to_string(),
        per_horizon,
        loglog_slope: loglog_slope(&points),
    }
}

/// Runs every (horizon, seed, replica) task and writes the three artifact
/// files under `out_dir`. Output is bitwise-deterministic for a fixed
/// config: workers race, the merge is by task index.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunArtifacts> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;

    let mut tasks = Vec::new();
    for horizon in cfg.horizons() {
        for &seed in &cfg.seeds {
            for replica in 0..cfg.replicas {
                tasks.push((horizon, seed, replica));
            }
        }
    }
    let slots: Mutex<Vec<Option<Result<TaskOutput>>>> =
        Mutex::new((0..tasks.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = thread_cap(tasks.len());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(horizon, seed, replica)) = tasks.get(idx) else { break };
                let out = run_one(cfg, &cfg.family, horizon, seed, replica).map(|(t, ledger)| {
                    TaskOutput {
                        csv: csv_rows(seed, replica, t, &ledger),
                        record: make_record(cfg, seed, replica, t, &ledger),
                    }
                });
                slots.lock().unwrap()[idx] = Some(out);
            });
        }
    });

    let mut csv = String::from(RESULTS_COLUMNS);
    csv.push('\n');
    let mut records = Vec::with_capacity(tasks.len());
    for slot in slots.into_inner().unwrap() {
        let out = slot.expect("every task ran")?;
        csv.push_str(&out.csv);
        records.push(out.record);
    }

    let summary = summarize(cfg, &records);
    let results_path = out_dir.join("results.csv");
    let runs_path = out_dir.join("runs.jsonl");
    let summary_path = out_dir.join("summary.json");
    std::fs::write(&results_path, csv)?;
    let mut jsonl = String::new();
    for r in &records {
        jsonl.push_str(&serde_json::to_string(r)?);
        jsonl.push('\n');
    }
    std::fs::write(&runs_path, jsonl)?;
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
    Ok(RunArtifacts { results_path, runs_path, summary_path, records, summary })
}

/// Parses a results.csv produced by [`run_experiment`]; the header must
/// carry every expected column.
pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| config("results file is empty"))?;
    let names: Vec<&str> = header.split(',').collect();
    let expected: Vec<&str> = RESULTS_COLUMNS.split(',').collect();
    for want in &expected {
        if !names.contains(want) {
            return Err(config(format!("results file is missing column `{want}`")));
        }
    }
    let col = |name: &str| names.iter().position(|c| c == &name).unwrap();
    let (c_seed, c_replica, c_t, c_round) =
        (col("seed"), col("replica"), col("t"), col("round"));
    let (c_explore, c_mistake, c_failure) = (col("explore"), col("mistake"), col("failure"));
    let (c_algo, c_frac, c_bench, c_cum) =
        (col("algo_cost"), col("frac_loss"), col("bench_cost"), col("cum_regret"));
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() {
            return Err(config(format!(
                "results line {}: {} fields, expected {}",
                lineno + 2,
                fields.len(),
                names.len()
            )));
        }
        let num = |idx: usize| -> Result<f64> {
            let raw = fields[idx];
            if raw == "inf" {
                return Ok(f64::INFINITY);
            }
            raw.parse::<f64>().map_err(|_| {
                config(format!("results line {}: bad number `{raw}`", lineno + 2))
            })
        };
        let opt = |idx: usize| -> Result<Option<f64>> {
            if fields[idx].is_empty() {
                return Ok(None);
            }
            num(idx).map(Some)
        };
        rows.push(ResultRow {
            seed: fields[c_seed]
                .parse()
                .map_err(|_| config(format!("results line {}: bad seed", lineno + 2)))?,
            replica: fields[c_replica]
                .parse()
                .map_err(|_| config(format!("results line {}: bad replica", lineno + 2)))?,
            t: fields[c_t]
                .parse()
                .map_err(|_| config(format!("results line {}: bad t", lineno + 2)))?,
            round: fields[c_round]
                .parse()
                .map_err(|_| config(format!("results line {}: bad round", lineno + 2)))?,
            explore: fields[c_explore] == "1",
            mistake: fields[c_mistake] == "1",
            failure: fields[c_failure] == "1",
            algo_cost: num(c_algo)?,
            frac_loss: opt(c_frac)?,
            bench_cost: opt(c_bench)?,
            cum_regret: opt(c_cum)?,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub seed: u64,
    pub replica: usize,
    pub t: usize,
    pub round: usize,
    pub explore: bool,
    pub mistake: bool,
    pub failure: bool,
    pub algo_cost: f64,
    pub frac_loss: Option<f64>,
    pub bench_cost: Option<f64>,
    pub cum_regret: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_config(t: usize) -> ExperimentConfig {
        serde_json::from_str(&format!(
            r#"{{
                "version": 1,
                "algorithm": "full-info",
                "family": {{"type": "select1"}},
                "instance": {{"generator": {{"kind": "mssc", "n": 3, "t": {t}}}}}
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn smoke_run_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = minimal_config(100);
        let art = run_experiment(&cfg, dir.path()).unwrap();
        let rows = parse_results_csv(&std::fs::read_to_string(&art.results_path).unwrap()).unwrap();
        assert_eq!(rows.len(), 100);
        assert_eq!(art.records.len(), 1);
        assert_eq!(art.records[0].rounds, 100);
        let summary: RunSummary =
            serde_json::from_str(&std::fs::read_to_string(&art.summary_path).unwrap()).unwrap();
        assert_eq!(summary.per_horizon.len(), 1);
        assert_eq!(summary.per_horizon[0].runs, 1);
    }

    #[test]
    fn same_seed_reruns_are_bitwise_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let cfg = minimal_config(60);
        run_experiment(&cfg, dir_a.path()).unwrap();
        run_experiment(&cfg, dir_b.path()).unwrap();
        for name in ["results.csv", "runs.jsonl", "summary.json"] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between reruns");
        }
    }

    #[test]
    fn summary_regret_matches_record_mean() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = minimal_config(80);
        cfg.seeds = vec![0, 1, 2];
        let art = run_experiment(&cfg, dir.path()).unwrap();
        let mean_regret: f64 = art
            .records
            .iter()
            .map(|r| r.avg_regret.unwrap())
            .sum::<f64>()
            / art.records.len() as f64;
        let summary_val = art.summary.per_horizon[0].mean_avg_regret.unwrap();
        assert!((summary_val - mean_regret).abs() <= 1e-12);
    }

    #[test]
    fn sweep_produces_one_summary_row_per_horizon() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = minimal_config(10);
        cfg.sweep_t = Some(vec![40, 80, 160]);
        let art = run_experiment(&cfg, dir.path()).unwrap();
        assert_eq!(art.summary.per_horizon.len(), 3);
        let ts: Vec<usize> = art.summary.per_horizon.iter().map(|h| h.t).collect();
        assert_eq!(ts, vec![40, 80, 160]);
        assert!(art.summary.loglog_slope.is_some());
    }

    #[test]
    fn loglog_slope_recovers_power_laws() {
        let pts: Vec<(f64, f64)> =
            [100.0f64, 1000.0, 10000.0].iter().map(|&t| (t, 3.0 * t.powf(-0.5))).collect();
        let slope = loglog_slope(&pts).unwrap();
        assert!((slope - -0.5).abs() < 1e-9, "slope {slope}");
        assert!(loglog_slope(&pts[..1]).is_none());
        assert!(loglog_slope(&[(10.0, -1.0), (20.0, -0.5)]).is_none());
    }

    #[test]
    fn missing_column_is_rejected() {
        let err = parse_results_csv("seed,replica,t\n").unwrap_err();
        assert!(err.to_string().contains("missing column"));
    }

    #[test]
    fn replica_zero_keeps_the_raw_seed() {
        assert_eq!(replica_seed(41, 0), 41);
        assert_ne!(replica_seed(41, 1), 41);
    }
}
