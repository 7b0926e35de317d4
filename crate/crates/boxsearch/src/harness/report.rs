//! Report emission: aggregated CSV tables plus static SVG charts built by
//! hand (no renderer dependency, diffable output).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{config, Result};

use super::runner::{loglog_slope, parse_results_csv, ResultRow, RunRecord};

#[derive(Debug)]
pub struct ReportArtifacts {
    pub rounds_csv: PathBuf,
    pub runs_csv: PathBuf,
    pub regret_svg: PathBuf,
    pub ratio_svg: PathBuf,
    pub slope: Option<f64>,
}

/// Resolves an input path: a run directory holds results.csv + runs.jsonl,
/// a bare file is taken as the results table.
fn resolve_inputs(path: &Path) -> Result<(PathBuf, Option<PathBuf>)> {
    if path.is_dir() {
        let results = path.join("results.csv");
        if !results.is_file() {
            return Err(config(format!("{} has no results.csv", path.display())));
        }
        let runs = path.join("runs.jsonl");
        Ok((results, runs.is_file().then_some(runs)))
    } else if path.is_file() {
        let runs = path.with_file_name("runs.jsonl");
        Ok((path.to_path_buf(), runs.is_file().then_some(runs)))
    } else {
        Err(config(format!("{} does not exist", path.display())))
    }
}

fn load_records(path: &Path) -> Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: RunRecord = serde_json::from_str(line).map_err(|e| {
            config(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        records.push(rec);
    }
    Ok(records)
}

/// Mean per-round average regret (cumulative regret over rounds elapsed),
/// grouped by horizon.
fn regret_curves(rows: &[ResultRow]) -> BTreeMap<usize, Vec<(f64, f64)>> {
    let mut acc: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for row in rows {
        if let Some(cum) = row.cum_regret {
            let entry = acc.entry((row.t, row.round)).or_insert((0.0, 0));
            entry.0 += cum / (row.round + 1) as f64;
            entry.1 += 1;
        }
    }
    let mut curves: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for ((t, round), (total, count)) in acc {
        curves.entry(t).or_default().push((round as f64, total / count as f64));
    }
    curves
}

/// Fitted log-log slope of mean average regret against horizon.
pub fn slope_from_records(records: &[RunRecord]) -> Option<f64> {
    let mut by_t: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in records {
        if let Some(reg) = r.avg_regret {
            let entry = by_t.entry(r.t).or_insert((0.0, 0));
            entry.0 += reg;
            entry.1 += 1;
        }
    }
    let points: Vec<(f64, f64)> = by_t
        .into_iter()
        .map(|(t, (total, count))| (t as f64, total / count as f64))
        .collect();
    loglog_slope(&points)
}

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

struct Frame {
    width: f64,
    height: f64,
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
}

const FRAME: Frame = Frame { width: 640.0, height: 400.0, left: 70.0, right: 20.0, top: 40.0, bottom: 50.0 };

impl Frame {
    fn x(&self, v: f64, lo: f64, hi: f64) -> f64 {
        let span = (hi - lo).max(1e-12);
        self.left + (v - lo) / span * (self.width - self.left - self.right)
    }

    fn y(&self, v: f64, lo: f64, hi: f64) -> f64 {
        let span = (hi - lo).max(1e-12);
        self.height - self.bottom - (v - lo) / span * (self.height - self.top - self.bottom)
    }
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 640 400\" ",
            "font-family=\"monospace\" font-size=\"12\">\n",
            "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n",
            "<text x=\"320\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n"
        ),
        title
    );
    s
}

fn svg_axes(s: &mut String, xlabel: &str, ylabel: &str, xr: (f64, f64), yr: (f64, f64)) {
    let f = &FRAME;
    let (x0, x1) = (f.left, f.width - f.right);
    let (y0, y1) = (f.height - f.bottom, f.top);
    let _ = write!(
        s,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    );
    for i in 0..=4 {
        let fx = xr.0 + (xr.1 - xr.0) * i as f64 / 4.0;
        let fy = yr.0 + (yr.1 - yr.0) * i as f64 / 4.0;
        let px = f.x(fx, xr.0, xr.1);
        let py = f.y(fy, yr.0, yr.1);
        let _ = write!(
            s,
            "<line x1=\"{px}\" y1=\"{y0}\" x2=\"{px}\" y2=\"{}\" stroke=\"black\"/>\n",
            y0 + 4.0
        );
        let _ = write!(
            s,
            "<text x=\"{px}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            y0 + 18.0,
            fmt2(fx)
        );
        let _ = write!(
            s,
            "<line x1=\"{}\" y1=\"{py}\" x2=\"{x0}\" y2=\"{py}\" stroke=\"black\"/>\n",
            x0 - 4.0
        );
        let _ = write!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            x0 - 8.0,
            py + 4.0,
            fmt2(fy)
        );
    }
    let _ = write!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{xlabel}</text>\n",
        (x0 + x1) / 2.0,
        f.height - 12.0
    );
    let _ = write!(
        s,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{ylabel}</text>\n",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
}

const PALETTE: [&str; 6] = ["#1b6ca8", "#c23b22", "#2e8540", "#8e44ad", "#b8860b", "#16a2b8"];

/// Average regret per round, one polyline per horizon, slope annotated
/// when a fit exists.
pub fn regret_chart(rows: &[ResultRow], slope: Option<f64>) -> String {
    let curves = regret_curves(rows);
    let mut s = svg_open("cumulative average regret");
    if curves.is_empty() {
        s.push_str("<text x=\"320\" y=\"200\" text-anchor=\"middle\">no benchmarked rows</text>\n</svg>\n");
        return s;
    }
    let xmax = curves
        .values()
        .flat_map(|c| c.iter().map(|p| p.0))
        .fold(1.0f64, f64::max);
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in curves.values().flatten() {
        ymin = ymin.min(p.1);
        ymax = ymax.max(p.1);
    }
    if ymin == ymax {
        ymin -= 0.5;
        ymax += 0.5;
    }
    let xr = (0.0, xmax);
    let yr = (ymin.min(0.0), ymax);
    svg_axes(&mut s, "round", "avg regret", xr, yr);
    for (k, (t, curve)) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = curve
            .iter()
            .map(|&(x, y)| format!("{},{}", fmt2(FRAME.x(x, xr.0, xr.1)), fmt2(FRAME.y(y, yr.0, yr.1))))
            .collect();
        let _ = write!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            points.join(" ")
        );
        let _ = write!(
            s,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">T={t}</text>\n",
            FRAME.width - 90.0,
            FRAME.top + 16.0 * (k as f64 + 1.0)
        );
    }
    if let Some(m) = slope {
        let _ = write!(
            s,
            "<text x=\"{}\" y=\"{}\">log-log slope {}</text>\n",
            FRAME.left + 8.0,
            FRAME.top + 14.0,
            format_args!("{m:.3}")
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Histogram of per-run cost ratios (algorithm over benchmark).
pub fn ratio_chart(records: &[RunRecord]) -> String {
    let ratios: Vec<f64> = records
        .iter()
        .filter_map(|r| match (r.avg_algo_cost, r.avg_bench_cost) {
            (Some(a), Some(b)) if b > 0.0 => Some(a / b),
            _ => None,
        })
        .collect();
    let mut s = svg_open("cost ratio histogram");
    if ratios.is_empty() {
        s.push_str("<text x=\"320\" y=\"200\" text-anchor=\"middle\">no ratio data</text>\n</svg>\n");
        return s;
    }
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi - lo < 1e-9 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    let bins = 12usize;
    let mut counts = vec![0usize; bins];
    for &r in &ratios {
        let idx = (((r - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let peak = *counts.iter().max().unwrap() as f64;
    svg_axes(&mut s, "ratio", "runs", (lo, hi), (0.0, peak));
    for (i, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let b0 = lo + (hi - lo) * i as f64 / bins as f64;
        let b1 = lo + (hi - lo) * (i + 1) as f64 / bins as f64;
        let x = FRAME.x(b0, lo, hi);
        let w = FRAME.x(b1, lo, hi) - x;
        let y = FRAME.y(c as f64, 0.0, peak);
        let h = FRAME.y(0.0, 0.0, peak) - y;
        let _ = write!(
            s,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#1b6ca8\" stroke=\"white\"/>\n",
            fmt2(x),
            fmt2(y),
            fmt2(w),
            fmt2(h)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Builds every report artifact from one or more run outputs.
pub fn write_report(inputs: &[PathBuf], out_dir: &Path) -> Result<ReportArtifacts> {
    if inputs.is_empty() {
        return Err(config("report needs at least one results path"));
    }
    let mut rows: Vec<ResultRow> = Vec::new();
    let mut records: Vec<RunRecord> = Vec::new();
    for input in inputs {
        let (results_path, runs_path) = resolve_inputs(input)?;
        let text = std::fs::read_to_string(&results_path)?;
        rows.extend(parse_results_csv(&text)?);
        if let Some(runs_path) = runs_path {
            records.extend(load_records(&runs_path)?);
        }
    }
    std::fs::create_dir_all(out_dir)?;

    let mut rounds = String::from("t,round,runs,mean_cum_regret,mean_avg_regret\n");
    let mut acc: BTreeMap<(usize, usize), (f64, f64, usize)> = BTreeMap::new();
    for row in &rows {
        if let Some(cum) = row.cum_regret {
            let e = acc.entry((row.t, row.round)).or_insert((0.0, 0.0, 0));
            e.0 += cum;
            e.1 += cum / (row.round + 1) as f64;
            e.2 += 1;
        }
    }
    for ((t, round), (cum, avg, count)) in &acc {
        let _ = writeln!(
            rounds,
            "{t},{round},{count},{},{}",
            cum / *count as f64,
            avg / *count as f64
        );
    }

    let mut runs_csv = String::from(
        "config_hash,algorithm,seed,replica,t,rounds,explores,mistakes,failures,avg_algo_cost,avg_frac_loss,avg_bench_cost,avg_regret,avg_realized_regret,cost_ratio\n",
    );
    for r in &records {
        let ratio = match (r.avg_algo_cost, r.avg_bench_cost) {
            (Some(a), Some(b)) if b > 0.0 => Some(a / b),
            _ => None,
        };
        let _ = writeln!(
            runs_csv,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.config_hash,
            r.algorithm,
            r.seed,
            r.replica,
            r.t,
            r.rounds,
            r.explores,
            r.mistakes,
            r.failures,
            opt_field(r.avg_algo_cost),
            opt_field(r.avg_frac_loss),
            opt_field(r.avg_bench_cost),
            opt_field(r.avg_regret),
            opt_field(r.avg_realized_regret),
            opt_field(ratio),
        );
    }

    let slope = slope_from_records(&records);
    let rounds_csv = out_dir.join("rounds.csv");
    let runs_path = out_dir.join("runs.csv");
    let regret_svg = out_dir.join("regret.svg");
    let ratio_svg = out_dir.join("ratios.svg");
    std::fs::write(&rounds_csv, rounds)?;
    std::fs::write(&runs_path, runs_csv)?;
    std::fs::write(&regret_svg, regret_chart(&rows, slope))?;
    std::fs::write(&ratio_svg, ratio_chart(&records))?;
    Ok(ReportArtifacts {
        rounds_csv,
        runs_csv: runs_path,
        regret_svg,
        ratio_svg,
        slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ExperimentConfig;
    use crate::harness::runner::run_experiment;

    fn record(t: usize, regret: f64) -> RunRecord {
        RunRecord {
            config_hash: "00".into(),
            algorithm: "full-info".into(),
            seed: 0,
            replica: 0,
            t,
            rounds: t,
            explores: 0,
            mistakes: 0,
            failures: 0,
            avg_algo_cost: Some(1.0),
            avg_frac_loss: None,
            avg_bench_cost: Some(0.5),
            avg_regret: Some(regret),
            avg_realized_regret: Some(regret),
        }
    }

    #[test]
    fn slope_annotation_matches_two_point_fit() {
        // with two horizons least squares is the secant slope
        let records = vec![record(100, 0.8), record(10_000, 0.08)];
        let got = slope_from_records(&records).unwrap();
        let expect = (0.08f64.ln() - 0.8f64.ln()) / (10_000f64.ln() - 100f64.ln());
        assert!((got - expect).abs() < 1e-12, "got {got} expect {expect}");
    }

    #[test]
    fn report_emits_all_artifacts_end_to_end() {
        let run_dir = tempfile::tempdir().unwrap();
        let report_dir = tempfile::tempdir().unwrap();
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{
                "version": 1,
                "algorithm": "full-info",
                "family": {"type": "select1"},
                "instance": {"generator": {"kind": "mssc", "n": 3, "t": 50}},
                "seeds": [0, 1]
            }"#,
        )
        .unwrap();
        run_experiment(&cfg, run_dir.path()).unwrap();
        let art = write_report(&[run_dir.path().to_path_buf()], report_dir.path()).unwrap();
        for p in [&art.rounds_csv, &art.runs_csv, &art.regret_svg, &art.ratio_svg] {
            assert!(p.is_file(), "{} missing", p.display());
        }
        let rounds = std::fs::read_to_string(&art.rounds_csv).unwrap();
        assert!(rounds.lines().count() > 1, "rounds table is empty");
        let svg = std::fs::read_to_string(&art.regret_svg).unwrap();
        assert!(svg.contains("<polyline"), "no curve drawn");
    }

    #[test]
    fn missing_results_column_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("results.csv");
        std::fs::write(&bad, "seed,replica\n1,2\n").unwrap();
        let err = write_report(&[bad], &dir.path().join("out")).unwrap_err();
        assert!(matches!(err, crate::error::Error::Config(_)), "{err}");
    }
}
