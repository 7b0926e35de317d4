//! Bandit-feedback play via interval exploration.
//!
//! The horizon is cut into intervals of tuned length; one uniformly placed
//! round per interval opens every box (full feedback, cost n plus the best
//! selection), and only those scenarios feed the leader. All other rounds
//! exploit the current schedule through the usual roundings; their partial
//! observations are logged in transcripts and ledger rows but never enter
//! the history, so the learner's iterates are a function of explored
//! scenarios alone.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{invalid_argument, Result};
use crate::ftrl::{default_eta, ftrl_minimize, FtrlSettings, ScenarioHistory};
use crate::ledger::{LedgerRow, RegretLedger};
use crate::model::{ConstraintFamily, ScenarioSequence};
use crate::oracle::{self, BenchmarkPolicy};
use crate::relax::{value_family, FractionalSchedule};
use crate::rng::{derive_rng, stream};
use crate::rounding::{open_all_transcript, round_schedule, StoppingRule};

/// Interval length balancing exploration cost against learning rate:
/// (n / (2 L ln n + n))^(2/3) * T^(1/3), rounded, at least one.
pub fn tune_interval_length(n: usize, horizon: usize, smoothness: f64) -> usize {
    let nf = n as f64;
    let base = nf / (2.0 * smoothness * nf.ln() + nf);
    let k = base.powf(2.0 / 3.0) * (horizon as f64).powf(1.0 / 3.0);
    (k.round() as usize).max(1)
}

/// Alternate tuning (n / (2 L + sqrt(ln n)))^(2/3) * T^(1/3); selectable via
/// options for sensitivity runs.
pub fn tune_interval_length_alternate(n: usize, horizon: usize, smoothness: f64) -> usize {
    let nf = n as f64;
    let base = nf / (2.0 * smoothness + nf.ln().sqrt());
    let k = base.powf(2.0 / 3.0) * (horizon as f64).powf(1.0 / 3.0);
    (k.round() as usize).max(1)
}

/// Average-regret envelope 2 (2 L ln n + n)^(2/3) n^(1/3) T^(-1/3).
pub fn bandit_regret_envelope(n: usize, horizon: usize, smoothness: f64) -> f64 {
    let nf = n as f64;
    2.0 * (2.0 * smoothness * nf.ln() + nf).powf(2.0 / 3.0) * nf.powf(1.0 / 3.0)
        / (horizon as f64).powf(1.0 / 3.0)
}

#[derive(Clone, Debug)]
pub struct BanditOptions {
    /// Learning rate; derived from (n, number of intervals) when absent.
    pub eta: Option<f64>,
    /// Interval length; tuned from (n, T, smoothness) when absent.
    pub interval: Option<usize>,
    /// Loss smoothness scale L; defaults to n.
    pub smoothness: Option<f64>,
    pub alternate_interval_formula: bool,
    pub stopping: StoppingRule,
    pub benchmark: BenchmarkPolicy,
    pub collect_iterates: bool,
    pub settings: FtrlSettings,
}

impl Default for BanditOptions {
    fn default() -> BanditOptions {
        BanditOptions {
            eta: None,
            interval: None,
            smoothness: None,
            alternate_interval_formula: false,
            stopping: StoppingRule::SkiRentalRandomized,
            benchmark: BenchmarkPolicy::Auto,
            collect_iterates: false,
            settings: FtrlSettings::default(),
        }
    }
}

/// One uniformly drawn explore position per interval, from the dedicated
/// seed stream: positions depend on the seed only, never on observations.
pub fn explore_positions(seed: u64, horizon: usize, interval: usize) -> Vec<usize> {
    let mut rng = derive_rng(seed, &[stream::EXPLORE_SCHEDULE]);
    let mut positions = Vec::new();
    let mut start = 0usize;
    while start < horizon {
        let len = interval.min(horizon - start);
        positions.push(start + rng.gen_range(0..len));
        start += len;
    }
    positions
}

pub fn run_bandit(
    seq: &ScenarioSequence,
    family: &ConstraintFamily,
    opts: &BanditOptions,
    seed: u64,
) -> Result<RegretLedger> {
    let n = seq.n;
    let horizon = seq.scenarios.len();
    if horizon == 0 {
        return Err(invalid_argument("empty scenario sequence"));
    }
    family.validate(n)?;
    let smoothness = opts.smoothness.unwrap_or(n as f64);
    if !(smoothness > 0.0) {
        return Err(invalid_argument("smoothness scale must be positive"));
    }
    let interval = match opts.interval {
        Some(0) => return Err(invalid_argument("interval length must be positive")),
        Some(k) => k,
        None if opts.alternate_interval_formula => {
            tune_interval_length_alternate(n, horizon, smoothness)
        }
        None => tune_interval_length(n, horizon, smoothness),
    };
    let intervals = horizon.div_ceil(interval);
    let eta = match opts.eta {
        Some(e) if e > 0.0 && e.is_finite() => e,
        Some(_) => return Err(invalid_argument("learning rate must be positive")),
        None => default_eta(n, intervals)?,
    };
    let bench_perm: Option<Vec<usize>> = match &opts.benchmark {
        BenchmarkPolicy::Auto if n <= oracle::PERMUTATION_LIMIT => {
            Some(oracle::best_fixed_permutation(seq, family)?.permutation)
        }
        BenchmarkPolicy::Auto | BenchmarkPolicy::None => None,
        BenchmarkPolicy::Permutation(p) => Some(p.clone()),
        BenchmarkPolicy::Set(_) => {
            return Err(invalid_argument("set benchmarks apply to non-adaptive runs"))
        }
    };

    let mut explore = vec![false; horizon];
    for p in explore_positions(seed, horizon, interval) {
        explore[p] = true;
    }

    let mut history = ScenarioHistory::new(n);
    let mut ledger = RegretLedger::new(opts.collect_iterates);
    let mut x = FractionalSchedule::uniform(n);
    let mut dirty = false;
    let mut epoch = 0usize;
    // relaxed losses are pure functions of (iterate, scenario); cache per epoch
    let mut frac_cache: HashMap<(usize, Vec<u64>), f64> = HashMap::new();
    let mut bench_cache: HashMap<Vec<u64>, crate::cost::Cost> = HashMap::new();

    for (t, raw) in seq.scenarios.iter().enumerate() {
        let s = raw.normalize();
        if !family.coverable(&s) {
            return Err(invalid_argument(format!("scenario at round {t} admits no selection")));
        }
        if dirty {
            x = ftrl_minimize(&history, family, eta, &opts.settings, Some(&x))?;
            epoch += 1;
            dirty = false;
        }
        let key = (epoch, s.canonical_key());
        let frac = match frac_cache.get(&key) {
            Some(&v) => v,
            None => {
                let v = value_family(family, &x, &s)?
                    .finite()
                    .ok_or_else(|| invalid_argument("relaxed cost diverged"))?;
                frac_cache.insert(key, v);
                v
            }
        };
        let (algo_cost, failure) = if explore[t] {
            let tr = open_all_transcript(&s, family, t);
            let c = tr.cost(family);
            history.push(&s)?;
            dirty = true;
            (c, false)
        } else {
            let mut rng = derive_rng(seed, &[stream::ROUNDING, t as u64]);
            let (_, tr) = round_schedule(family, &x, &s, opts.stopping, &mut rng, t)?;
            let c = tr.cost(family);
            let failed = c.is_infinite();
            (c, failed)
        };
        let bench_cost = bench_perm.as_ref().map(|p| {
            *bench_cache
                .entry(s.canonical_key())
                .or_insert_with(|| oracle::permutation_stopping_cost(p, &s, family))
        });
        ledger.rows.push(LedgerRow {
            round: t,
            explore: explore[t],
            mistake: false,
            failure,
            algo_cost,
            frac_loss: Some(frac),
            bench_cost,
        });
        ledger.push_iterate(x.clone());
    }
    Ok(ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::Cost;
    use crate::model::{GeneratorSpec, Scenario};

    #[test]
    fn interval_tuning_fixtures() {
        assert_eq!(tune_interval_length(3, 2000, 3.0), 6);
        assert_eq!(tune_interval_length_alternate(3, 2000, 3.0), 7);
        assert_eq!(tune_interval_length(2, 1, 2.0), 1);
    }

    #[test]
    fn every_interval_gets_one_explore() {
        let positions = explore_positions(11, 100, 7);
        assert_eq!(positions.len(), 100usize.div_ceil(7));
        for (m, &p) in positions.iter().enumerate() {
            let start = m * 7;
            let end = (start + 7).min(100);
            assert!(p >= start && p < end, "position {p} outside interval {m}");
        }
    }

    #[test]
    fn explore_offsets_look_uniform() {
        // chi-square over interval offsets, 99.9% quantile via the
        // Wilson-Hilferty cube approximation
        let interval = 10usize;
        let horizon = 200usize;
        let mut counts = vec![0usize; interval];
        let mut total = 0usize;
        for seed in 0..500u64 {
            for (m, p) in explore_positions(seed, horizon, interval).iter().enumerate() {
                counts[p - m * interval] += 1;
                total += 1;
            }
        }
        let expected = total as f64 / interval as f64;
        let chi2: f64 =
            counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let df = (interval - 1) as f64;
        let z = 3.0902; // 99.9% normal quantile
        let threshold = df * (1.0 - 2.0 / (9.0 * df) + z * (2.0 / (9.0 * df)).sqrt()).powi(3);
        assert!(chi2 <= threshold, "chi2 {chi2} threshold {threshold}");
    }

    #[test]
    fn iterates_depend_only_on_explored_scenarios() {
        let n = 3;
        let t = 60;
        let seq = ScenarioSequence::generate(
            &GeneratorSpec::Mssc { n, t, density: 0.5, on_empty: Default::default() },
            4,
        )
        .unwrap();
        let fam = ConstraintFamily::Select1;
        let opts = BanditOptions { collect_iterates: true, ..Default::default() };
        let seed = 19;
        let a = run_bandit(&seq, &fam, &opts, seed).unwrap();

        // perturb every unexplored round's scenario wholesale
        let mut scenarios = seq.scenarios.clone();
        for (i, row) in a.rows.iter().enumerate() {
            if !row.explore {
                let mut costs = vec![Cost::Infinite; n];
                costs[i % n] = Cost::Finite(0.0);
                costs[(i + 1) % n] = Cost::Finite(1.0);
                scenarios[i] = Scenario { costs };
            }
        }
        let perturbed = ScenarioSequence::from_scenarios(n, scenarios).unwrap();
        let b = run_bandit(&perturbed, &fam, &opts, seed).unwrap();

        let xa = a.iterates.as_ref().unwrap();
        let xb = b.iterates.as_ref().unwrap();
        assert_eq!(xa.len(), xb.len());
        for (p, q) in xa.iter().zip(xb) {
            assert_eq!(p.matrix().data(), q.matrix().data());
        }
        for (p, q) in a.rows.iter().zip(&b.rows) {
            assert_eq!(p.explore, q.explore);
        }
    }

    #[test]
    fn explore_rounds_pay_full_opening() {
        let n = 3;
        let seq = ScenarioSequence::generate(
            &GeneratorSpec::Mssc { n, t: 30, density: 0.6, on_empty: Default::default() },
            8,
        )
        .unwrap();
        let fam = ConstraintFamily::Select1;
        let ledger = run_bandit(&seq, &fam, &BanditOptions::default(), 5).unwrap();
        assert!(ledger.explores() >= 1);
        for row in ledger.rows.iter().filter(|r| r.explore) {
            // opened all n boxes and selected a zero-cost one
            assert_eq!(row.algo_cost, Cost::Finite(n as f64));
        }
    }

    #[test]
    fn bandit_replays_bit_for_bit() {
        let seq = ScenarioSequence::generate(
            &GeneratorSpec::UniformCosts { n: 3, t: 40 },
            2,
        )
        .unwrap();
        let fam = ConstraintFamily::Select1;
        let opts = BanditOptions::default();
        let a = run_bandit(&seq, &fam, &opts, 77).unwrap();
        let b = run_bandit(&seq, &fam, &opts, 77).unwrap();
        assert_eq!(a.rows, b.rows);
    }
}
