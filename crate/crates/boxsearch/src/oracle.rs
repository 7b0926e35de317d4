//! Exact small-instance benchmarks by exhaustive enumeration.
//!
//! Both oracles are deliberately brute force so they can serve as ground
//! truth for the learners: the fixed-permutation benchmark walks all n!
//! opening orders (n <= 8) with per-prefix optimal stopping, the fixed-set
//! benchmark all 2^n - 1 opening sets (n <= 16). Results are memoized by
//! instance content hash since runs replay the same benchmark every round.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::cost::Cost;
use crate::error::{invalid_argument, Result};
use crate::model::{ConstraintFamily, Scenario, ScenarioSequence};

/// Largest n for the factorial permutation sweep.
pub const PERMUTATION_LIMIT: usize = 8;
/// Largest n for the subset sweep.
pub const SET_LIMIT: usize = 16;

/// How a run resolves its per-round benchmark column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkPolicy {
    /// Compute the exact benchmark when the instance is small enough,
    /// otherwise record no benchmark.
    Auto,
    /// Never compute a benchmark.
    None,
    /// Score rounds against this fixed opening order.
    Permutation(Vec<usize>),
    /// Score rounds against this fixed opening set (bit i = box i).
    Set(u64),
}

impl Default for BenchmarkPolicy {
    fn default() -> BenchmarkPolicy {
        BenchmarkPolicy::Auto
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationBenchmark {
    pub permutation: Vec<usize>,
    pub avg_cost: Cost,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetBenchmark {
    pub boxes: Vec<usize>,
    pub avg_cost: Cost,
}

fn restricted_costs(scenario: &Scenario, opened_mask: u64) -> Vec<Cost> {
    scenario
        .costs
        .iter()
        .enumerate()
        .map(|(i, &c)| if opened_mask >> i & 1 == 1 { c } else { Cost::Infinite })
        .collect()
}

/// Cost of playing a fixed opening order on one scenario with optimal
/// stopping: min over prefixes of (openings paid + best feasible selection
/// among the opened boxes).
pub fn permutation_stopping_cost(
    perm: &[usize],
    scenario: &Scenario,
    family: &ConstraintFamily,
) -> Cost {
    let mut best = Cost::Infinite;
    let mut opened = 0u64;
    for (idx, &b) in perm.iter().enumerate() {
        let t = (idx + 1) as f64;
        if let Cost::Finite(v) = best {
            // selections are nonnegative, so deeper prefixes cannot win
            if t >= v {
                break;
            }
        }
        opened |= 1 << b;
        let sel = family.best_selection_value(&restricted_costs(scenario, opened));
        let total = sel.add_finite(t);
        if total < best {
            best = total;
        }
    }
    best
}

/// Cost of opening a fixed set on one scenario: |S| plus the best feasible
/// selection inside it.
pub fn set_stopping_cost(mask: u64, scenario: &Scenario, family: &ConstraintFamily) -> Cost {
    let size = mask.count_ones() as f64;
    family.best_selection_value(&restricted_costs(scenario, mask)).add_finite(size)
}

fn next_permutation(perm: &mut [usize]) -> bool {
    if perm.len() < 2 {
        return false;
    }
    let mut i = perm.len() - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = perm.len() - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

fn family_cache_key(family: &ConstraintFamily) -> String {
    serde_json::to_string(family).unwrap_or_default()
}

fn pa_cache() -> &'static Mutex<HashMap<(u64, String), PermutationBenchmark>> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, String), PermutationBenchmark>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn na_cache() -> &'static Mutex<HashMap<(u64, String), SetBenchmark>> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, String), SetBenchmark>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn weighted_avg(costs: &[Cost], counts: &[usize], total: usize) -> Cost {
    let mut sum = 0.0;
    for (c, &k) in costs.iter().zip(counts) {
        match c {
            Cost::Finite(v) => sum += v * k as f64,
            Cost::Infinite => return Cost::Infinite,
        }
    }
    Cost::Finite(sum / total as f64)
}

/// Best fixed opening order for the whole sequence, frequency weighted.
/// Ties break to the lexicographically smallest permutation.
pub fn best_fixed_permutation(
    seq: &ScenarioSequence,
    family: &ConstraintFamily,
) -> Result<PermutationBenchmark> {
    let n = seq.n;
    if n == 0 || n > PERMUTATION_LIMIT {
        return Err(invalid_argument(format!(
            "permutation benchmark supports 1..={PERMUTATION_LIMIT} boxes, got {n}"
        )));
    }
    if seq.scenarios.is_empty() {
        return Err(invalid_argument("benchmark needs at least one scenario"));
    }
    family.validate(n)?;
    let key = (seq.content_hash(), family_cache_key(family));
    if let Some(hit) = pa_cache().lock().unwrap().get(&key) {
        return Ok(hit.clone());
    }

    let (unique, counts, _) = seq.unique_with_counts();
    let unique: Vec<Scenario> = unique.iter().map(|s| s.normalize()).collect();
    let total = seq.scenarios.len();

    let mut perm: Vec<usize> = (0..n).collect();
    let mut best_perm = perm.clone();
    let mut best_avg = Cost::Infinite;
    loop {
        let mut sum = 0.0;
        let mut infinite = false;
        let budget = match best_avg {
            Cost::Finite(v) => v * total as f64,
            Cost::Infinite => f64::INFINITY,
        };
        for (s, &k) in unique.iter().zip(&counts) {
            match permutation_stopping_cost(&perm, s, family) {
                Cost::Finite(v) => sum += v * k as f64,
                Cost::Infinite => {
                    infinite = true;
                    break;
                }
            }
            if sum >= budget {
                break;
            }
        }
        if !infinite && sum < budget {
            best_avg = Cost::Finite(sum / total as f64);
            best_perm = perm.clone();
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }

    let out = PermutationBenchmark { permutation: best_perm, avg_cost: best_avg };
    pa_cache().lock().unwrap().insert(key, out.clone());
    Ok(out)
}

/// Best fixed opening set for the whole sequence, frequency weighted.
/// Ties break to the smallest mask.
pub fn best_nonadaptive_set(
    seq: &ScenarioSequence,
    family: &ConstraintFamily,
) -> Result<SetBenchmark> {
    let n = seq.n;
    if n == 0 || n > SET_LIMIT {
        return Err(invalid_argument(format!(
            "set benchmark supports 1..={SET_LIMIT} boxes, got {n}"
        )));
    }
    if seq.scenarios.is_empty() {
        return Err(invalid_argument("benchmark needs at least one scenario"));
    }
    family.validate(n)?;
    let key = (seq.content_hash(), family_cache_key(family));
    if let Some(hit) = na_cache().lock().unwrap().get(&key) {
        return Ok(hit.clone());
    }

    let (unique, counts, _) = seq.unique_with_counts();
    let unique: Vec<Scenario> = unique.iter().map(|s| s.normalize()).collect();
    let total = seq.scenarios.len();

    let mut best_mask = 0u64;
    let mut best_avg = Cost::Infinite;
    for mask in 1u64..(1u64 << n) {
        let size = mask.count_ones() as f64;
        if let Cost::Finite(v) = best_avg {
            if size >= v {
                continue;
            }
        }
        let mut costs = Vec::with_capacity(unique.len());
        let mut infinite = false;
        for s in &unique {
            let c = set_stopping_cost(mask, s, family);
            if c.is_infinite() {
                infinite = true;
                break;
            }
            costs.push(c);
        }
        if infinite {
            continue;
        }
        let avg = weighted_avg(&costs, &counts, total);
        if avg < best_avg {
            best_avg = avg;
            best_mask = mask;
        }
    }

    let boxes: Vec<usize> = (0..n).filter(|i| best_mask >> i & 1 == 1).collect();
    let out = SetBenchmark { boxes, avg_cost: best_avg };
    na_cache().lock().unwrap().insert(key, out.clone());
    Ok(out)
}

/// Exported record for the fixture subcommand.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchmarkFixture {
    /// Content hash of the instance, hex.
    pub instance: String,
    pub family: ConstraintFamily,
    pub permutation: Option<PermutationBenchmark>,
    pub set: Option<SetBenchmark>,
}

pub fn compute_fixture(
    seq: &ScenarioSequence,
    family: &ConstraintFamily,
) -> Result<BenchmarkFixture> {
    let permutation =
        if seq.n <= PERMUTATION_LIMIT { Some(best_fixed_permutation(seq, family)?) } else { None };
    let set = if seq.n <= SET_LIMIT { Some(best_nonadaptive_set(seq, family)?) } else { None };
    Ok(BenchmarkFixture {
        instance: format!("{:016x}", seq.content_hash()),
        family: family.clone(),
        permutation,
        set,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matroid::Matroid;
    use crate::model::GeneratorSpec;

    fn scenario(costs: &[f64]) -> Scenario {
        Scenario { costs: costs.iter().map(|&c| Cost::new(c).unwrap()).collect() }
    }

    fn seq(n: usize, scenarios: Vec<Scenario>) -> ScenarioSequence {
        ScenarioSequence::from_scenarios(n, scenarios).unwrap()
    }

    #[test]
    fn stopping_prefers_interior_prefix() {
        let s = scenario(&[2.0, 0.0, 3.0]);
        let fam = ConstraintFamily::Select1;
        let c = permutation_stopping_cost(&[0, 1, 2], &s, &fam);
        assert_eq!(c, Cost::Finite(2.0));
        let c = permutation_stopping_cost(&[1, 0, 2], &s, &fam);
        assert_eq!(c, Cost::Finite(1.0));
    }

    #[test]
    fn stopping_is_infinite_without_usable_box() {
        let s = Scenario { costs: vec![Cost::Infinite, Cost::Infinite] };
        let fam = ConstraintFamily::Select1;
        assert!(permutation_stopping_cost(&[0, 1], &s, &fam).is_infinite());
    }

    #[test]
    fn alternating_two_boxes_costs_three_halves() {
        let scenarios = vec![scenario(&[0.0, 2.0]), scenario(&[2.0, 0.0])];
        let fam = ConstraintFamily::Select1;
        let bench = best_fixed_permutation(&seq(2, scenarios), &fam).unwrap();
        assert_eq!(bench.avg_cost, Cost::Finite(1.5));
        assert_eq!(bench.permutation, vec![0, 1]);
    }

    #[test]
    fn select_two_needs_two_openings() {
        let scenarios = vec![scenario(&[0.0, 1.0, 4.0])];
        let fam = ConstraintFamily::SelectK { k: 2 };
        let bench = best_fixed_permutation(&seq(3, scenarios), &fam).unwrap();
        // open boxes 0 and 1, pay 2 openings + values 0 + 1
        assert_eq!(bench.avg_cost, Cost::Finite(3.0));
        assert_eq!(&bench.permutation[..2], &[0, 1]);
    }

    #[test]
    fn partition_basis_benchmark() {
        let fam = ConstraintFamily::MatroidBasis {
            matroid: Matroid::Partition { parts: vec![vec![0, 1], vec![2]], capacities: vec![1, 1] },
        };
        let scenarios = vec![scenario(&[0.5, 3.0, 1.0])];
        let bench = best_fixed_permutation(&seq(3, scenarios), &fam).unwrap();
        // basis {0, 2}: open both (cost 2) + values 1.5
        assert_eq!(bench.avg_cost, Cost::Finite(3.5));
    }

    #[test]
    fn disjoint_support_forces_two_box_set() {
        let scenarios = vec![
            Scenario { costs: vec![Cost::Finite(0.0), Cost::Infinite, Cost::Infinite] },
            Scenario { costs: vec![Cost::Infinite, Cost::Finite(0.0), Cost::Infinite] },
        ];
        let fam = ConstraintFamily::Select1;
        let bench = best_nonadaptive_set(&seq(3, scenarios), &fam).unwrap();
        assert_eq!(bench.boxes, vec![0, 1]);
        assert_eq!(bench.avg_cost, Cost::Finite(2.0));
    }

    #[test]
    fn adaptive_order_never_beaten_by_fixed_set() {
        for seed in 0..20 {
            let spec = GeneratorSpec::UniformCosts { n: 4, t: 6 };
            let s = ScenarioSequence::generate(&spec, seed).unwrap();
            let fam = ConstraintFamily::Select1;
            let pa = best_fixed_permutation(&s, &fam).unwrap();
            let na = best_nonadaptive_set(&s, &fam).unwrap();
            let (a, b) = (pa.avg_cost.finite().unwrap(), na.avg_cost.finite().unwrap());
            assert!(a <= b + 1e-9, "seed {seed}: permutation {a} vs set {b}");
        }
    }

    #[test]
    fn cache_returns_identical_results() {
        let spec = GeneratorSpec::Mssc { n: 4, t: 8, density: 0.5, on_empty: Default::default() };
        let s = ScenarioSequence::generate(&spec, 3).unwrap();
        let fam = ConstraintFamily::Select1;
        let a = best_fixed_permutation(&s, &fam).unwrap();
        let b = best_fixed_permutation(&s, &fam).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fixture_carries_both_benchmarks() {
        let scenarios = vec![scenario(&[0.0, 1.0])];
        let fam = ConstraintFamily::Select1;
        let fx = compute_fixture(&seq(2, scenarios), &fam).unwrap();
        assert!(fx.permutation.is_some());
        assert!(fx.set.is_some());
        let text = serde_json::to_string(&fx).unwrap();
        let back: BenchmarkFixture = serde_json::from_str(&text).unwrap();
        assert_eq!(back.permutation.unwrap(), fx.permutation.unwrap());
    }
}
