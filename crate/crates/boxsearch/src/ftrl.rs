//! Follow-the-regularized-leader over the doubly stochastic polytope.
//!
//! The learner keeps a fractional opening schedule and, after each observed
//! scenario, re-solves
//!
//!   min_x  sum_s count(s) * loss(x, s) + U(x),   U(x) = (1/eta) sum x ln x
//!
//! over doubly stochastic matrices. The inner solver is entropic mirror
//! descent with a Sinkhorn projection after every step, warm-started from the
//! previous iterate. History is stored deduplicated: repeated scenarios only
//! scale their subgradient contribution, so adversaries that cycle through a
//! handful of cost vectors stay cheap no matter the horizon.

use std::collections::HashMap;

use crate::error::{invalid_argument, Error, Result};
use crate::model::Scenario;
use crate::relax::{eval_family, FractionalSchedule, Matrix};
use crate::ConstraintFamily;

/// Learning rate sqrt(ln n / T). Needs n >= 2: a single box admits only one
/// schedule and the regularizer scale degenerates.
pub fn default_eta(n: usize, horizon: usize) -> Result<f64> {
    if n < 2 {
        return Err(invalid_argument("learning rate needs at least two boxes"));
    }
    if horizon == 0 {
        return Err(invalid_argument("horizon must be positive"));
    }
    Ok(((n as f64).ln() / horizon as f64).sqrt())
}

/// Negative-entropy regularizer (1/eta) sum x ln x, with 0 ln 0 = 0.
pub fn entropy_regularizer(x: &Matrix, eta: f64) -> f64 {
    let s: f64 = x.data().iter().map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 }).sum();
    s / eta
}

/// Sinkhorn-Knopp scaling onto the doubly stochastic polytope.
///
/// Alternates row and column normalization until every row sum is within
/// `tol` of 1 (column sums are exact right after a column sweep). Entries
/// must be strictly positive; callers floor them first.
pub fn sinkhorn_project(raw: &Matrix, tol: f64, max_iters: usize) -> Result<FractionalSchedule> {
    let n = raw.n();
    if raw.data().iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(invalid_argument("scaling requires strictly positive finite entries"));
    }
    let mut m = raw.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        for i in 0..n {
            let mut sum = 0.0;
            for t in 0..n {
                sum += m.get(i, t);
            }
            for t in 0..n {
                let v = m.get(i, t) / sum;
                m.set(i, t, v);
            }
        }
        for t in 0..n {
            let mut sum = 0.0;
            for i in 0..n {
                sum += m.get(i, t);
            }
            for i in 0..n {
                let v = m.get(i, t) / sum;
                m.set(i, t, v);
            }
        }
        residual = 0.0;
        for i in 0..n {
            let mut sum = 0.0;
            for t in 0..n {
                sum += m.get(i, t);
            }
            residual = residual.max((sum - 1.0).abs());
        }
        if residual <= tol {
            return FractionalSchedule::new(m, tol.max(1e-9));
        }
    }
    Err(Error::NotConverged {
        context: "doubly stochastic scaling",
        residual,
        limit: max_iters,
    })
}

/// Observed scenarios deduplicated by cost vector, with multiplicities.
#[derive(Clone, Debug)]
pub struct ScenarioHistory {
    n: usize,
    entries: Vec<(Scenario, usize)>,
    index: HashMap<Vec<u64>, usize>,
    total: usize,
}

impl ScenarioHistory {
    pub fn new(n: usize) -> ScenarioHistory {
        ScenarioHistory { n, entries: Vec::new(), index: HashMap::new(), total: 0 }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Records one observation. Scenarios are normalized before insertion so
    /// that value-equal cost vectors always collapse onto one entry.
    pub fn push(&mut self, s: &Scenario) -> Result<()> {
        if s.costs.len() != self.n {
            return Err(invalid_argument("scenario size does not match history"));
        }
        let s = s.normalize();
        let key = s.canonical_key();
        match self.index.get(&key) {
            Some(&slot) => self.entries[slot].1 += 1,
            None => {
                self.index.insert(key, self.entries.len());
                self.entries.push((s, 1));
            }
        }
        self.total += 1;
        Ok(())
    }

    pub fn from_scenarios<'a>(
        n: usize,
        scenarios: impl IntoIterator<Item = &'a Scenario>,
    ) -> Result<ScenarioHistory> {
        let mut h = ScenarioHistory::new(n);
        for s in scenarios {
            h.push(s)?;
        }
        Ok(h)
    }

    pub fn unique(&self) -> &[(Scenario, usize)] {
        &self.entries
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }
}

#[derive(Clone, Debug)]
pub struct FtrlSettings {
    pub max_inner_iters: usize,
    /// Relative improvement below which an iteration counts as stalled.
    pub rel_tol: f64,
    /// Consecutive stalled iterations tolerated before stopping.
    pub patience: usize,
    /// Entries are floored here before the Sinkhorn projection.
    pub floor: f64,
    pub sinkhorn_tol: f64,
    pub sinkhorn_max_iters: usize,
}

impl Default for FtrlSettings {
    fn default() -> FtrlSettings {
        FtrlSettings {
            max_inner_iters: 2000,
            rel_tol: 1e-8,
            patience: 25,
            floor: 1e-12,
            sinkhorn_tol: 1e-10,
            sinkhorn_max_iters: 200_000,
        }
    }
}

fn objective_and_grad(
    history: &ScenarioHistory,
    family: &ConstraintFamily,
    eta: f64,
    x: &FractionalSchedule,
) -> Result<(f64, Matrix)> {
    let n = history.n();
    let mut value = entropy_regularizer(x.matrix(), eta);
    let mut grad = Matrix::zeros(n);
    // d/dx of (1/eta) x ln x
    for (g, &v) in grad.data_mut().iter_mut().zip(x.matrix().data()) {
        *g = (1.0 + v.max(1e-300).ln()) / eta;
    }
    for (s, count) in history.unique() {
        let (v, sub) = eval_family(family, x, s)?;
        let c = *count as f64;
        value += c * v;
        grad.axpy(&sub, c);
    }
    Ok((value, grad))
}

/// Minimizes cumulative relaxed loss plus entropy over doubly stochastic
/// matrices. Empty history yields the uniform schedule. `warm` seeds the
/// search next to the previous round's iterate.
pub fn ftrl_minimize(
    history: &ScenarioHistory,
    family: &ConstraintFamily,
    eta: f64,
    settings: &FtrlSettings,
    warm: Option<&FractionalSchedule>,
) -> Result<FractionalSchedule> {
    let n = history.n();
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(invalid_argument("learning rate must be positive"));
    }
    let uniform = FractionalSchedule::uniform(n);
    if history.is_empty() {
        return Ok(uniform);
    }

    let (mut best_obj, mut grad) = objective_and_grad(history, family, eta, &uniform)?;
    let mut best = uniform.clone();
    let mut x = uniform;
    if let Some(w) = warm {
        if w.n() == n {
            let (obj_w, grad_w) = objective_and_grad(history, family, eta, w)?;
            if obj_w < best_obj {
                best_obj = obj_w;
                best = w.clone();
                x = w.clone();
                grad = grad_w;
            }
        }
    }

    let mut stalled = 0usize;
    for j in 1..=settings.max_inner_iters {
        let gamma = 0.5 / (j as f64).sqrt();
        // Multiplicative step x * exp(-gamma g). A global shift of the
        // exponent is absorbed by the projection, so shift by the max to
        // keep every exponential in (0, 1].
        let mut shift = f64::NEG_INFINITY;
        for &g in grad.data() {
            shift = shift.max(-gamma * g);
        }
        let mut stepped = Matrix::zeros(n);
        for ((w, &xv), &g) in
            stepped.data_mut().iter_mut().zip(x.matrix().data()).zip(grad.data())
        {
            let v = xv.max(settings.floor) * (-gamma * g - shift).exp();
            *w = v.max(settings.floor);
        }
        x = sinkhorn_project(&stepped, settings.sinkhorn_tol, settings.sinkhorn_max_iters)?;
        let (obj, g) = objective_and_grad(history, family, eta, &x)?;
        grad = g;
        if obj < best_obj - settings.rel_tol * (1.0 + best_obj.abs()) {
            best_obj = obj;
            best = x.clone();
            stalled = 0;
        } else {
            if obj < best_obj {
                best_obj = obj;
                best = x.clone();
            }
            stalled += 1;
            if stalled >= settings.patience {
                break;
            }
        }
    }
    Ok(best)
}

#[derive(Clone, Debug)]
pub struct FullInfoOptions {
    /// Learning rate; derived from (n, T) when absent.
    pub eta: Option<f64>,
    pub stopping: crate::rounding::StoppingRule,
    pub benchmark: crate::oracle::BenchmarkPolicy,
    pub collect_iterates: bool,
    pub settings: FtrlSettings,
}

impl Default for FullInfoOptions {
    fn default() -> FullInfoOptions {
        FullInfoOptions {
            eta: None,
            stopping: crate::rounding::StoppingRule::ScenarioAware,
            benchmark: crate::oracle::BenchmarkPolicy::Auto,
            collect_iterates: false,
            settings: FtrlSettings::default(),
        }
    }
}

/// Full-information play: each round re-solves the regularized leader on the
/// history so far, rounds the schedule into a transcript, then appends the
/// observed scenario. Per-round rounding draws come from a seed-derived
/// stream indexed by round, so runs replay bit for bit.
pub fn run_full_information(
    seq: &crate::model::ScenarioSequence,
    family: &ConstraintFamily,
    opts: &FullInfoOptions,
    seed: u64,
) -> Result<crate::ledger::RegretLedger> {
    use crate::ledger::{LedgerRow, RegretLedger};
    use crate::oracle::{self, BenchmarkPolicy};
    use crate::rng::{derive_rng, stream};

    let n = seq.n;
    let horizon = seq.scenarios.len();
    if horizon == 0 {
        return Err(invalid_argument("empty scenario sequence"));
    }
    family.validate(n)?;
    let eta = match opts.eta {
        Some(e) if e > 0.0 && e.is_finite() => e,
        Some(_) => return Err(invalid_argument("learning rate must be positive")),
        None => default_eta(n, horizon)?,
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

    let mut history = ScenarioHistory::new(n);
    let mut ledger = RegretLedger::new(opts.collect_iterates);
    let mut prev: Option<FractionalSchedule> = None;
    for (t, raw) in seq.scenarios.iter().enumerate() {
        let s = raw.normalize();
        let x = ftrl_minimize(&history, family, eta, &opts.settings, prev.as_ref())?;
        let mut rng = derive_rng(seed, &[stream::ROUNDING, t as u64]);
        let (frac, transcript) =
            crate::rounding::round_schedule(family, &x, &s, opts.stopping, &mut rng, t)?;
        let algo_cost = transcript.cost(family);
        let bench_cost =
            bench_perm.as_ref().map(|p| oracle::permutation_stopping_cost(p, &s, family));
        ledger.rows.push(LedgerRow {
            round: t,
            explore: false,
            mistake: false,
            failure: algo_cost.is_infinite(),
            algo_cost,
            frac_loss: Some(frac),
            bench_cost,
        });
        ledger.push_iterate(x.clone());
        history.push(&s)?;
        prev = Some(x);
    }
    Ok(ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::Cost;
    use crate::rng::{derive_rng, stream};
    use rand::Rng;

    fn scenario(costs: &[f64]) -> Scenario {
        Scenario { costs: costs.iter().map(|&c| Cost::new(c).unwrap()).collect() }
    }

    #[test]
    fn eta_fixture() {
        let eta = default_eta(2, 100).unwrap();
        assert!((eta - 0.08325546111576977).abs() < 1e-12);
        assert!(default_eta(1, 100).is_err());
        assert!(default_eta(3, 0).is_err());
    }

    #[test]
    fn sinkhorn_reaches_birkhoff_polytope() {
        let mut rng = derive_rng(7, &[stream::GENERATOR]);
        for n in 2..6 {
            let raw = Matrix::from_fn(n, |_, _| rng.gen::<f64>() + 0.05);
            let x = sinkhorn_project(&raw, 1e-12, 100_000).unwrap();
            assert!(x.birkhoff_residual() <= 1e-9);
        }
    }

    #[test]
    fn sinkhorn_rejects_nonpositive_entries() {
        let mut raw = Matrix::zeros(2);
        raw.set(0, 0, 1.0);
        raw.set(0, 1, 1.0);
        raw.set(1, 0, 1.0);
        assert!(sinkhorn_project(&raw, 1e-10, 100).is_err());
    }

    #[test]
    fn sinkhorn_is_invariant_on_scaled_rows() {
        // Row/column scalings of a doubly stochastic matrix project back to it.
        let base = FractionalSchedule::uniform(3);
        let mut raw = base.matrix().clone();
        for t in 0..3 {
            let v = raw.get(1, t) * 7.5;
            raw.set(1, t, v);
        }
        let x = sinkhorn_project(&raw, 1e-12, 100_000).unwrap();
        assert!(x.matrix().l1_distance(base.matrix()) < 1e-8);
    }

    #[test]
    fn history_deduplicates_by_value() {
        let mut h = ScenarioHistory::new(2);
        h.push(&scenario(&[0.0, 1.0])).unwrap();
        h.push(&scenario(&[0.0, 1.0])).unwrap();
        h.push(&scenario(&[1.0, 0.0])).unwrap();
        // above-n finite costs normalize to unusable, merging with the same pattern
        let big = Scenario {
            costs: vec![Cost::Finite(9.0), Cost::Finite(0.0)],
        };
        let inf = Scenario { costs: vec![Cost::Infinite, Cost::Finite(0.0)] };
        h.push(&big).unwrap();
        h.push(&inf).unwrap();
        assert_eq!(h.total(), 5);
        let counts: Vec<usize> = h.unique().iter().map(|(_, c)| *c).collect();
        assert_eq!(counts, vec![2, 1, 2]);
    }

    #[test]
    fn strong_convexity_witness() {
        // U(mid) <= (U(a)+U(b))/2 - |a-b|_1^2 / (8n) at eta = 1.
        let mut rng = derive_rng(11, &[stream::GENERATOR, 4]);
        for n in 2..6 {
            for _ in 0..40 {
                let a = sinkhorn_project(
                    &Matrix::from_fn(n, |_, _| rng.gen::<f64>() + 0.02),
                    1e-12,
                    100_000,
                )
                .unwrap();
                let b = sinkhorn_project(
                    &Matrix::from_fn(n, |_, _| rng.gen::<f64>() + 0.02),
                    1e-12,
                    100_000,
                )
                .unwrap();
                let mut mid = a.matrix().clone();
                mid.add(b.matrix());
                let mid = mid.scaled(0.5);
                let lhs = entropy_regularizer(&mid, 1.0);
                let avg =
                    0.5 * (entropy_regularizer(a.matrix(), 1.0) + entropy_regularizer(b.matrix(), 1.0));
                let gap = a.matrix().l1_distance(b.matrix()).powi(2) / (8.0 * n as f64);
                assert!(
                    lhs <= avg - gap + 1e-9,
                    "witness violated: lhs={lhs} avg={avg} gap={gap}"
                );
            }
        }
    }

    #[test]
    fn empty_history_returns_uniform() {
        let h = ScenarioHistory::new(4);
        let fam = ConstraintFamily::Select1;
        let x = ftrl_minimize(&h, &fam, 0.1, &FtrlSettings::default(), None).unwrap();
        assert!(x.matrix().l1_distance(FractionalSchedule::uniform(4).matrix()) < 1e-12);
    }

    #[test]
    fn minimizer_concentrates_on_cheap_box() {
        // One box always free: the schedule should load its first slot.
        let mut h = ScenarioHistory::new(3);
        for _ in 0..30 {
            h.push(&scenario(&[0.0, 2.0, 2.0])).unwrap();
        }
        let fam = ConstraintFamily::Select1;
        let x = ftrl_minimize(&h, &fam, 0.3, &FtrlSettings::default(), None).unwrap();
        assert!(x.get(0, 0) > 0.8, "x00 = {}", x.get(0, 0));
        assert!(x.birkhoff_residual() <= 1e-9);
    }

    #[test]
    fn warm_start_never_hurts() {
        let mut h = ScenarioHistory::new(3);
        h.push(&scenario(&[0.0, 1.0, 2.0])).unwrap();
        h.push(&scenario(&[2.0, 0.0, 1.0])).unwrap();
        let fam = ConstraintFamily::Select1;
        let eta = 0.2;
        let settings = FtrlSettings::default();
        let cold = ftrl_minimize(&h, &fam, eta, &settings, None).unwrap();
        let warm = ftrl_minimize(&h, &fam, eta, &settings, Some(&cold)).unwrap();
        let (obj_cold, _) = objective_and_grad(&h, &fam, eta, &cold).unwrap();
        let (obj_warm, _) = objective_and_grad(&h, &fam, eta, &warm).unwrap();
        assert!(obj_warm <= obj_cold + 1e-7);
    }

    #[test]
    fn full_information_run_replays_bit_for_bit() {
        use crate::model::{GeneratorSpec, ScenarioSequence};
        let seq = ScenarioSequence::generate(
            &GeneratorSpec::Mssc { n: 3, t: 12, density: 0.5, on_empty: Default::default() },
            9,
        )
        .unwrap();
        let fam = ConstraintFamily::Select1;
        let opts = FullInfoOptions { collect_iterates: true, ..Default::default() };
        let a = run_full_information(&seq, &fam, &opts, 42).unwrap();
        let b = run_full_information(&seq, &fam, &opts, 42).unwrap();
        assert_eq!(a.rows, b.rows);
        for x in a.iterates.as_ref().unwrap() {
            assert!(x.birkhoff_residual() <= 1e-9);
        }
        let c = run_full_information(&seq, &fam, &opts, 43).unwrap();
        assert_eq!(a.rows.len(), c.rows.len());
    }

    #[test]
    fn regret_envelope_on_small_alternating_sequence() {
        use crate::model::{GeneratorSpec, ScenarioSequence};
        use crate::oracle;

        let n = 3;
        let t = 240;
        let seq =
            ScenarioSequence::generate(&GeneratorSpec::AdversarialAlternating { n, t }, 5).unwrap();
        let eta = default_eta(n, t).unwrap();
        let fam = ConstraintFamily::Select1;
        let bench = oracle::best_fixed_permutation(&seq, &fam).unwrap();
        let mut history = ScenarioHistory::new(n);
        let mut prev: Option<FractionalSchedule> = None;
        let mut frac_total = 0.0;
        let settings = FtrlSettings::default();
        for s in &seq.scenarios {
            let x = ftrl_minimize(&history, &fam, eta, &settings, prev.as_ref()).unwrap();
            let (v, _) = eval_family(&fam, &x, s).unwrap();
            frac_total += v;
            history.push(s).unwrap();
            prev = Some(x);
        }
        let avg_regret = frac_total / t as f64 - bench.avg_cost.finite().unwrap();
        let envelope = 2.0 * n as f64 * ((n as f64).ln() / t as f64).sqrt();
        assert!(
            avg_regret <= envelope,
            "avg regret {avg_regret} exceeds envelope {envelope}"
        );
    }
}
