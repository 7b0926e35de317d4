//! Randomized roundings from fractional schedules to opening transcripts.
//!
//! Each rounding has two halves: an opening order sampled from the schedule
//! alone (scenario-independent), and a stopping rule that walks the order as
//! values are revealed. Stopping is either scenario-aware (thresholds from
//! the relaxation at the realized scenario) or rent-or-buy for single
//! selection, where the searcher balances openings paid against the best
//! value seen.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::Cost;
use crate::error::{invalid_argument, Result};
use crate::matroid::Matroid;
use crate::model::{ConstraintFamily, InspectionTranscript, Scenario};
use crate::relax::{eval_spa, eval_spa_k, eval_spa_matroid, CoverageValue, FractionalSchedule};

/// Value-scaled guarantee factor for single selection.
pub const SELECT1_FACTOR: f64 = 3.0 + 2.0 * std::f64::consts::SQRT_2;
/// Mass amplification for k-selection phase openings.
pub const SELECTK_FACTOR: f64 = 8.0;
/// Mass amplification for matroid slot openings (scaled by ln rank).
pub const MATROID_FACTOR: f64 = 64.0;

/// Extra reconsideration phases granted after every box is open before a
/// k-selection rounding is declared failed.
const EXTRA_PHASES: usize = 48;
/// Opening slots per box before a matroid order falls back to appending.
const MATROID_SLOT_FACTOR: usize = 50;
/// Extra reconsideration slots for the matroid stopping walk.
const MATROID_EXTRA_SLOTS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StoppingRule {
    /// Stop from relaxation thresholds evaluated at the realized scenario.
    ScenarioAware,
    /// Balance openings paid against the best value seen.
    SkiRentalDeterministic,
    /// Same, with a randomized budget doubling schedule.
    SkiRentalRandomized,
}

impl Default for StoppingRule {
    fn default() -> StoppingRule {
        StoppingRule::ScenarioAware
    }
}

/// Flat opening order for single selection.
#[derive(Clone, Debug, PartialEq)]
pub struct OpeningOrder {
    pub boxes: Vec<usize>,
}

/// Phased opening order for k-selection; phase l opens with horizon 2^l.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasedOrder {
    pub phases: Vec<Vec<usize>>,
}

impl PhasedOrder {
    pub fn all_boxes(&self) -> Vec<usize> {
        self.phases.iter().flatten().copied().collect()
    }
}

/// Slot-stamped opening order for matroid bases.
#[derive(Clone, Debug, PartialEq)]
pub struct SlottedOrder {
    /// (box, slot) in opening sequence order; slots are nondecreasing.
    pub events: Vec<(usize, usize)>,
}

fn row_masses(x: &FractionalSchedule) -> Vec<f64> {
    let n = x.n();
    (0..n).map(|i| (0..n).map(|t| x.get(i, t)).sum()).collect()
}

/// Unopened boxes ordered by decreasing schedule mass, ties on id.
fn straggler_order(unopened: &[usize], masses: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = unopened.to_vec();
    order.sort_by(|&a, &b| {
        masses[b].partial_cmp(&masses[a]).unwrap().then(a.cmp(&b))
    });
    order
}

/// Samples a single-selection opening order: each slot t makes two opening
/// trials per unopened box with probability amp * X_i(t) / t, then leftovers
/// are appended by decreasing mass.
pub fn sample_order_1(x: &FractionalSchedule, rng: &mut ChaCha8Rng) -> OpeningOrder {
    let n = x.n();
    let amp = SELECT1_FACTOR / (SELECT1_FACTOR - 1.0);
    let prefix = x.matrix().prefix_by_slot();
    let mut opened = vec![false; n];
    let mut boxes = Vec::with_capacity(n);
    for t in 1..=n {
        for _ in 0..2 {
            for i in 0..n {
                if opened[i] {
                    continue;
                }
                let q = (amp * prefix.get(i, t - 1) / t as f64).min(1.0);
                if rng.gen::<f64>() < q {
                    opened[i] = true;
                    boxes.push(i);
                }
            }
        }
    }
    let leftovers: Vec<usize> = (0..n).filter(|&i| !opened[i]).collect();
    boxes.extend(straggler_order(&leftovers, &row_masses(x)));
    OpeningOrder { boxes }
}

/// Walks the order, selecting the first box whose value is at or below the
/// threshold. The transcript ends unselected when nothing qualifies.
pub fn stop_select1(
    order: &OpeningOrder,
    scenario: &Scenario,
    threshold: f64,
    round: usize,
) -> InspectionTranscript {
    let mut tr = InspectionTranscript::new(round);
    for &i in &order.boxes {
        let c = scenario.costs[i];
        tr.open(i, c);
        if let Cost::Finite(v) = c {
            if v <= threshold {
                tr.select(i);
                break;
            }
        }
    }
    tr
}

/// Scenario-aware stopping threshold from the relaxed selection part.
pub fn select1_threshold(selection_part: f64) -> f64 {
    SELECT1_FACTOR * selection_part
}

/// Rent-or-buy stopping without scenario knowledge: keep opening while the
/// best value seen exceeds the budget, select the best seen once it does not.
/// Deterministic budget is the openings paid; the randomized variant draws
/// u with density e^u / (e - 1) on [0, 1] and doubles budgets u * 2^j.
pub fn ski_rental_stop(
    order: &OpeningOrder,
    scenario: &Scenario,
    randomized: bool,
    rng: &mut ChaCha8Rng,
    round: usize,
) -> InspectionTranscript {
    let mut tr = InspectionTranscript::new(round);
    let mut best: Option<(usize, f64)> = None;
    let mut paid = 0.0f64;

    if randomized {
        let u = (1.0 + rng.gen::<f64>() * (std::f64::consts::E - 1.0)).ln();
        let mut j = 0i32;
        let mut next = order.boxes.iter();
        loop {
            let budget = u * 2f64.powi(j);
            if let Some((b, v)) = best {
                if v <= budget {
                    tr.select(b);
                    return tr;
                }
            }
            if paid >= budget {
                j += 1;
                continue;
            }
            match next.next() {
                Some(&i) => {
                    let c = scenario.costs[i];
                    tr.open(i, c);
                    paid += 1.0;
                    if let Cost::Finite(v) = c {
                        if best.map_or(true, |(_, bv)| v < bv) {
                            best = Some((i, v));
                        }
                    }
                }
                None => {
                    if let Some((b, _)) = best {
                        tr.select(b);
                    }
                    return tr;
                }
            }
        }
    }

    for &i in &order.boxes {
        let c = scenario.costs[i];
        tr.open(i, c);
        paid += 1.0;
        if let Cost::Finite(v) = c {
            if best.map_or(true, |(_, bv)| v < bv) {
                best = Some((i, v));
            }
        }
        if let Some((b, v)) = best {
            if v <= paid {
                tr.select(b);
                return tr;
            }
        }
    }
    if let Some((b, _)) = best {
        tr.select(b);
    }
    tr
}

/// Samples the phased k-selection order: phase l opens each unopened box
/// with probability min(1, 8 * X_i(min(2^l, n))).
pub fn sample_order_k(x: &FractionalSchedule, rng: &mut ChaCha8Rng) -> PhasedOrder {
    let n = x.n();
    let prefix = x.matrix().prefix_by_slot();
    let mut opened = vec![false; n];
    let mut remaining = n;
    let mut phases = Vec::new();
    let mut horizon = 1usize;
    while remaining > 0 {
        let h = horizon.min(n);
        let mut phase = Vec::new();
        for i in 0..n {
            if opened[i] {
                continue;
            }
            let q = (SELECTK_FACTOR * prefix.get(i, h - 1)).min(1.0);
            if rng.gen::<f64>() < q {
                opened[i] = true;
                remaining -= 1;
                phase.push(i);
            }
        }
        phases.push(phase);
        horizon = horizon.saturating_mul(2);
    }
    PhasedOrder { phases }
}

fn z_prefix(n: usize, z: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
    let mut grid = vec![vec![0.0; n]; n];
    for &(i, t, v) in z {
        grid[i][t] += v;
    }
    for row in &mut grid {
        for t in 1..n {
            row[t] += row[t - 1];
        }
    }
    grid
}

/// Largest slot (1-based) whose completion level is at most one half; zero
/// when already above at the first slot.
fn half_coverage_slot(y: &[f64]) -> usize {
    let mut t_star = 0;
    for (idx, &v) in y.iter().enumerate() {
        if v <= 0.5 {
            t_star = idx + 1;
        }
    }
    t_star
}

/// Phased stopping for k selections: once the phase horizon passes the
/// half-coverage slot, every opened unselected box is reconsidered with
/// probability min(1, 8 * Z_i(h) / q_i(h)).
pub fn stop_select_k(
    order: &PhasedOrder,
    scenario: &Scenario,
    x: &FractionalSchedule,
    k: usize,
    cov: &CoverageValue,
    rng: &mut ChaCha8Rng,
    round: usize,
) -> InspectionTranscript {
    let n = x.n();
    let prefix = x.matrix().prefix_by_slot();
    let zpre = z_prefix(n, &cov.z);
    let t_star = half_coverage_slot(&cov.y);
    let mut tr = InspectionTranscript::new(round);
    let mut opened_order: Vec<usize> = Vec::with_capacity(n);
    let mut selected = vec![false; n];
    let mut n_selected = 0usize;

    let max_phases = order.phases.len() + EXTRA_PHASES;
    let mut horizon = 1usize;
    for phase in 0..max_phases {
        let h = horizon.min(n);
        if let Some(boxes) = order.phases.get(phase) {
            for &i in boxes {
                tr.open(i, scenario.costs[i]);
                opened_order.push(i);
            }
        }
        if horizon >= t_star.max(1) {
            let mut any_possible = false;
            for &i in &opened_order {
                if selected[i] {
                    continue;
                }
                let q = (SELECTK_FACTOR * prefix.get(i, h - 1)).min(1.0);
                if q <= 0.0 {
                    continue;
                }
                let p = (SELECTK_FACTOR * zpre[i][h - 1] / q).min(1.0);
                if p > 0.0 {
                    any_possible = true;
                }
                if rng.gen::<f64>() < p {
                    selected[i] = true;
                    n_selected += 1;
                    tr.select(i);
                    if n_selected == k {
                        return tr;
                    }
                }
            }
            // all boxes open, full horizon, and nothing can ever fire
            if !any_possible && opened_order.len() == n && h == n {
                break;
            }
        }
        horizon = horizon.saturating_mul(2);
    }
    tr
}

/// Samples the slot-stamped matroid order: slot t opens each unopened box
/// with probability min(1, 64 ln(rank) * X_i(min(t, n)) / t), with leftovers
/// appended by decreasing mass after 50n slots.
pub fn sample_order_matroid(
    x: &FractionalSchedule,
    matroid: &Matroid,
    rng: &mut ChaCha8Rng,
) -> SlottedOrder {
    let n = x.n();
    // ln(rank) degenerates for rank one; clamp to ln 2 so probabilities stay positive
    let lam = MATROID_FACTOR * (matroid.full_rank().max(2) as f64).ln();
    let prefix = x.matrix().prefix_by_slot();
    let mut opened = vec![false; n];
    let mut remaining = n;
    let mut events = Vec::with_capacity(n);
    let cap = MATROID_SLOT_FACTOR * n;
    for t in 1..=cap {
        if remaining == 0 {
            break;
        }
        let h = t.min(n);
        for i in 0..n {
            if opened[i] {
                continue;
            }
            let q = (lam * prefix.get(i, h - 1) / t as f64).min(1.0);
            if rng.gen::<f64>() < q {
                opened[i] = true;
                remaining -= 1;
                events.push((i, t));
            }
        }
    }
    if remaining > 0 {
        let leftovers: Vec<usize> = (0..n).filter(|&i| !opened[i]).collect();
        for (j, i) in straggler_order(&leftovers, &row_masses(x)).into_iter().enumerate() {
            events.push((i, cap + 1 + j));
        }
    }
    SlottedOrder { events }
}

/// Slot-by-slot stopping for matroid bases: past the half-coverage slot,
/// each opened box extending the current independent set is taken with
/// probability min(1, 64 ln(rank) * Z_i(min(t, n)) / (t * q_it)).
pub fn stop_select_matroid(
    order: &SlottedOrder,
    scenario: &Scenario,
    x: &FractionalSchedule,
    matroid: &Matroid,
    cov: &CoverageValue,
    rng: &mut ChaCha8Rng,
    round: usize,
) -> InspectionTranscript {
    let n = x.n();
    let rank_goal = matroid.full_rank();
    let mut tr = InspectionTranscript::new(round);
    if rank_goal == 0 {
        return tr;
    }
    let lam = MATROID_FACTOR * (rank_goal.max(2) as f64).ln();
    let prefix = x.matrix().prefix_by_slot();
    let zpre = z_prefix(n, &cov.z);
    let t_star = half_coverage_slot(&cov.y);

    let last_slot = order.events.last().map_or(0, |&(_, s)| s);
    let cap = last_slot.max(MATROID_SLOT_FACTOR * n) + MATROID_EXTRA_SLOTS;
    let mut next_event = 0usize;
    let mut opened_order: Vec<usize> = Vec::with_capacity(n);
    let mut selected_mask = 0u64;
    let mut n_selected = 0usize;

    for t in 1..=cap {
        while next_event < order.events.len() && order.events[next_event].1 <= t {
            let i = order.events[next_event].0;
            tr.open(i, scenario.costs[i]);
            opened_order.push(i);
            next_event += 1;
        }
        if t <= t_star {
            continue;
        }
        let h = t.min(n);
        let mut any_possible = false;
        for &i in &opened_order {
            if selected_mask >> i & 1 == 1 {
                continue;
            }
            if !matroid.is_independent_mask(selected_mask | 1 << i) {
                continue;
            }
            let q = (lam * prefix.get(i, h - 1) / t as f64).min(1.0);
            if q <= 0.0 {
                continue;
            }
            let p = (lam * zpre[i][h - 1] / (t as f64 * q)).min(1.0);
            if p > 0.0 {
                any_possible = true;
            }
            if rng.gen::<f64>() < p {
                selected_mask |= 1 << i;
                n_selected += 1;
                tr.select(i);
                if n_selected == rank_goal {
                    return tr;
                }
            }
        }
        if !any_possible && next_event == order.events.len() && t > t_star {
            break;
        }
    }
    tr
}

/// Opens every box in id order and selects the cheapest feasible set. Used
/// by explore rounds and as the fallback when a standing solution cannot
/// cover the realized scenario.
pub fn open_all_transcript(
    scenario: &Scenario,
    family: &ConstraintFamily,
    round: usize,
) -> InspectionTranscript {
    let n = scenario.costs.len();
    let mut tr = InspectionTranscript::new(round);
    for i in 0..n {
        tr.open(i, scenario.costs[i]);
    }
    match family {
        ConstraintFamily::Select1 => {
            let mut best: Option<(f64, usize)> = None;
            for (i, c) in scenario.costs.iter().enumerate() {
                if let Cost::Finite(v) = c {
                    if best.map_or(true, |(bv, _)| *v < bv) {
                        best = Some((*v, i));
                    }
                }
            }
            if let Some((_, i)) = best {
                tr.select(i);
            }
        }
        ConstraintFamily::SelectK { k } => {
            let mut finite: Vec<(f64, usize)> = scenario
                .costs
                .iter()
                .enumerate()
                .filter_map(|(i, c)| c.finite().map(|v| (v, i)))
                .collect();
            if finite.len() >= *k {
                finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for &(_, i) in finite.iter().take(*k) {
                    tr.select(i);
                }
            }
        }
        ConstraintFamily::MatroidBasis { matroid } => {
            if let Some((mask, _)) = matroid.min_weight_basis(&scenario.costs) {
                for i in 0..n {
                    if mask >> i & 1 == 1 {
                        tr.select(i);
                    }
                }
            }
        }
    }
    tr
}

/// Samples an order and stops it: the one-call rounding used by the runs.
/// Returns the relaxed cost of the schedule on this scenario alongside the
/// transcript.
pub fn round_schedule(
    family: &ConstraintFamily,
    x: &FractionalSchedule,
    scenario: &Scenario,
    rule: StoppingRule,
    rng: &mut ChaCha8Rng,
    round: usize,
) -> Result<(f64, InspectionTranscript)> {
    match family {
        ConstraintFamily::Select1 => {
            let spa = eval_spa(x, scenario)?;
            if spa.value.is_infinite() {
                return Err(invalid_argument("scenario admits no usable selection"));
            }
            let order = sample_order_1(x, rng);
            let tr = match rule {
                StoppingRule::ScenarioAware => {
                    stop_select1(&order, scenario, select1_threshold(spa.selection), round)
                }
                StoppingRule::SkiRentalDeterministic => {
                    ski_rental_stop(&order, scenario, false, rng, round)
                }
                StoppingRule::SkiRentalRandomized => {
                    ski_rental_stop(&order, scenario, true, rng, round)
                }
            };
            Ok((spa.finite_value(), tr))
        }
        ConstraintFamily::SelectK { k } => {
            if rule != StoppingRule::ScenarioAware {
                return Err(invalid_argument(
                    "rent-or-buy stopping applies to single selection only",
                ));
            }
            let cov = eval_spa_k(x, scenario, *k)?;
            if cov.value.is_infinite() {
                return Err(invalid_argument("scenario cannot cover k selections"));
            }
            let order = sample_order_k(x, rng);
            let tr = stop_select_k(&order, scenario, x, *k, &cov, rng, round);
            Ok((cov.opening + cov.selection, tr))
        }
        ConstraintFamily::MatroidBasis { matroid } => {
            if rule != StoppingRule::ScenarioAware {
                return Err(invalid_argument(
                    "rent-or-buy stopping applies to single selection only",
                ));
            }
            let cov = eval_spa_matroid(x, scenario, matroid)?;
            if cov.value.is_infinite() {
                return Err(invalid_argument("scenario cannot cover a basis"));
            }
            let order = sample_order_matroid(x, matroid, rng);
            let tr = stop_select_matroid(&order, scenario, x, matroid, &cov, rng, round);
            Ok((cov.opening + cov.selection, tr))
        }
    }
}
