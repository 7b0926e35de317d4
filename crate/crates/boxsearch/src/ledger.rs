//! Per-round run records shared by the learners.

use crate::cost::Cost;
use crate::relax::FractionalSchedule;

/// One round of play, simulator-side accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct LedgerRow {
    pub round: usize,
    /// The round was spent probing (full opening) rather than exploiting.
    pub explore: bool,
    /// The standing solution could not cover the realized scenario.
    pub mistake: bool,
    /// A randomized rounding was truncated before completing a selection.
    pub failure: bool,
    /// Realized cost actually paid this round.
    pub algo_cost: Cost,
    /// Relaxed cost of the current schedule on the realized scenario.
    pub frac_loss: Option<f64>,
    /// Per-round cost of the fixed benchmark policy, when available.
    pub bench_cost: Option<Cost>,
}

impl LedgerRow {
    /// Cost used for regret accounting: the relaxed loss when the round was
    /// played from a schedule, the realized cost otherwise.
    pub fn effective_cost(&self) -> Cost {
        if self.explore {
            self.algo_cost
        } else {
            match self.frac_loss {
                Some(v) => Cost::Finite(v),
                None => self.algo_cost,
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RegretLedger {
    pub rows: Vec<LedgerRow>,
    /// Schedule iterates, kept only when requested.
    pub iterates: Option<Vec<FractionalSchedule>>,
}

impl RegretLedger {
    pub fn new(collect_iterates: bool) -> RegretLedger {
        RegretLedger { rows: Vec::new(), iterates: collect_iterates.then(Vec::new) }
    }

    pub fn push_iterate(&mut self, x: FractionalSchedule) {
        if let Some(list) = &mut self.iterates {
            list.push(x);
        }
    }

    pub fn rounds(&self) -> usize {
        self.rows.len()
    }

    pub fn explores(&self) -> usize {
        self.rows.iter().filter(|r| r.explore).count()
    }

    pub fn mistakes(&self) -> usize {
        self.rows.iter().filter(|r| r.mistake).count()
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.failure).count()
    }

    fn mean_of(&self, f: impl Fn(&LedgerRow) -> Option<f64>) -> Option<f64> {
        if self.rows.is_empty() {
            return None;
        }
        let mut total = 0.0;
        for row in &self.rows {
            total += f(row)?;
        }
        Some(total / self.rows.len() as f64)
    }

    /// Mean realized cost; None when empty or any round is infinite.
    pub fn avg_algo_cost(&self) -> Option<f64> {
        self.mean_of(|r| r.algo_cost.finite())
    }

    pub fn avg_bench_cost(&self) -> Option<f64> {
        self.mean_of(|r| r.bench_cost.and_then(Cost::finite))
    }

    pub fn avg_frac_loss(&self) -> Option<f64> {
        self.mean_of(|r| r.frac_loss)
    }

    /// Mean (relaxed loss - benchmark cost): the learner's regret measure.
    pub fn avg_frac_regret(&self) -> Option<f64> {
        let frac = self.avg_frac_loss()?;
        let bench = self.avg_bench_cost()?;
        Some(frac - bench)
    }

    /// Mean (effective cost - benchmark cost): explore rounds contribute
    /// their realized probe cost, exploited rounds their relaxed loss.
    pub fn avg_regret(&self) -> Option<f64> {
        let eff = self.mean_of(|r| r.effective_cost().finite())?;
        let bench = self.avg_bench_cost()?;
        Some(eff - bench)
    }

    /// Mean (realized cost - benchmark cost).
    pub fn avg_realized_regret(&self) -> Option<f64> {
        let algo = self.avg_algo_cost()?;
        let bench = self.avg_bench_cost()?;
        Some(algo - bench)
    }
}
