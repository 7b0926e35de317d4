//! Domain model: scenarios, constraint families, transcripts, generators.
//!
//! A scenario assigns each of the n boxes a cost from [0, n] or marks it
//! unusable. An algorithm run opens boxes one at a time (paying 1 per box),
//! selects a feasible set for the constraint family, and is charged
//! opening count plus selected values.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::Cost;
use crate::error::{Error, Result};
use crate::matroid::Matroid;
use crate::rng::{derive_rng, stream};

/// One round's hidden cost vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub costs: Vec<Cost>,
}

impl Scenario {
    pub fn new(costs: Vec<Cost>) -> Self {
        Scenario { costs }
    }

    pub fn n(&self) -> usize {
        self.costs.len()
    }

    /// Value identity: scenarios compare by exact bit pattern, so repeated
    /// rounds deduplicate without any tolerance policy.
    pub fn canonical_key(&self) -> Vec<u64> {
        self.costs.iter().map(|c| c.canonical_bits()).collect()
    }

    /// Caps finite costs at n: anything larger can never beat the option of
    /// opening every remaining box, so it is folded into the sentinel.
    pub fn normalize(&self) -> Scenario {
        let n = self.n() as f64;
        let costs = self
            .costs
            .iter()
            .map(|&c| match c {
                Cost::Finite(v) if v > n => Cost::Infinite,
                other => other,
            })
            .collect();
        Scenario { costs }
    }

    pub fn finite_count(&self) -> usize {
        self.costs.iter().filter(|c| c.is_finite()).count()
    }

    pub fn finite_mask(&self) -> u64 {
        let mut mask = 0u64;
        for (i, c) in self.costs.iter().enumerate() {
            if c.is_finite() {
                mask |= 1 << i;
            }
        }
        mask
    }
}

/// What a feasible selected set looks like.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConstraintFamily {
    /// Exactly one box.
    Select1,
    /// Exactly k distinct boxes.
    SelectK { k: usize },
    /// A basis of the matroid.
    MatroidBasis { matroid: Matroid },
}

impl ConstraintFamily {
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            ConstraintFamily::Select1 => Ok(()),
            ConstraintFamily::SelectK { k } => {
                if *k == 0 || *k > n {
                    Err(Error::invalid_argument(format!(
                        "select-k needs 1 <= k <= n, got k={k}, n={n}"
                    )))
                } else {
                    Ok(())
                }
            }
            ConstraintFamily::MatroidBasis { matroid } => {
                matroid.validate()?;
                if matroid.ground_size() != n {
                    return Err(Error::invalid_argument(format!(
                        "matroid ground size {} does not match n={n}",
                        matroid.ground_size()
                    )));
                }
                Ok(())
            }
        }
    }

    /// Number of boxes any feasible selection contains.
    pub fn selection_size(&self) -> usize {
        match self {
            ConstraintFamily::Select1 => 1,
            ConstraintFamily::SelectK { k } => *k,
            ConstraintFamily::MatroidBasis { matroid } => matroid.full_rank(),
        }
    }

    pub fn is_feasible_selection(&self, mask: u64) -> bool {
        let size = mask.count_ones() as usize;
        match self {
            ConstraintFamily::Select1 => size == 1,
            ConstraintFamily::SelectK { k } => size == *k,
            ConstraintFamily::MatroidBasis { matroid } => {
                size == matroid.full_rank() && matroid.is_independent_mask(mask)
            }
        }
    }

    /// Cheapest feasible selection value over the given costs (selection
    /// values only, no opening charge). Infinite when none exists.
    pub fn best_selection_value(&self, costs: &[Cost]) -> Cost {
        match self {
            ConstraintFamily::Select1 => costs
                .iter()
                .copied()
                .fold(Cost::Infinite, |acc, c| if c < acc { c } else { acc }),
            ConstraintFamily::SelectK { k } => {
                let mut finite: Vec<f64> = costs.iter().filter_map(|c| c.finite()).collect();
                if finite.len() < *k {
                    return Cost::Infinite;
                }
                finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
                Cost::Finite(finite[..*k].iter().sum())
            }
            ConstraintFamily::MatroidBasis { matroid } => match matroid.min_weight_basis(costs) {
                Some((_, w)) => Cost::Finite(w),
                None => Cost::Infinite,
            },
        }
    }

    /// True when the scenario admits any feasible selection at all.
    pub fn coverable(&self, scenario: &Scenario) -> bool {
        self.best_selection_value(&scenario.costs).is_finite()
    }
}

/// Record of one round: which boxes were opened (with the values revealed)
/// and which were selected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InspectionTranscript {
    pub round: usize,
    /// Opening order, duplicate-free; each entry carries the revealed value.
    pub opened: Vec<(usize, Cost)>,
    pub selected: Vec<usize>,
}

impl InspectionTranscript {
    pub fn new(round: usize) -> Self {
        InspectionTranscript { round, opened: Vec::new(), selected: Vec::new() }
    }

    pub fn open(&mut self, box_id: usize, value: Cost) {
        debug_assert!(
            !self.opened.iter().any(|&(i, _)| i == box_id),
            "box {box_id} opened twice"
        );
        self.opened.push((box_id, value));
    }

    pub fn is_opened(&self, box_id: usize) -> bool {
        self.opened.iter().any(|&(i, _)| i == box_id)
    }

    pub fn select(&mut self, box_id: usize) {
        debug_assert!(self.is_opened(box_id), "selected unopened box {box_id}");
        debug_assert!(!self.selected.contains(&box_id));
        self.selected.push(box_id);
    }

    pub fn selected_mask(&self) -> u64 {
        let mut mask = 0u64;
        for &i in &self.selected {
            mask |= 1 << i;
        }
        mask
    }

    /// Opening count plus selected values; Infinite when the selected set is
    /// not feasible for the family or contains an unusable box.
    pub fn cost(&self, family: &ConstraintFamily) -> Cost {
        if !family.is_feasible_selection(self.selected_mask()) {
            return Cost::Infinite;
        }
        let mut total = Cost::Finite(self.opened.len() as f64);
        for &sel in &self.selected {
            let value = self
                .opened
                .iter()
                .find(|&&(i, _)| i == sel)
                .map(|&(_, v)| v)
                .unwrap_or(Cost::Infinite);
            total = total.add(value);
        }
        total
    }
}

/// How a scenario stream was produced; kept with the sequence so runs can be
/// replayed bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// Covering instances: each box is 0 with probability `density`, else
    /// unusable. Scenarios with no usable box are regenerated or rejected.
    Mssc {
        n: usize,
        t: usize,
        #[serde(default = "default_density")]
        density: f64,
        #[serde(default)]
        on_empty: OnEmpty,
    },
    /// Independent costs uniform on [0, n).
    UniformCosts { n: usize, t: usize },
    /// Costs concentrated around per-cluster centers with bounded spread.
    Clustered {
        n: usize,
        t: usize,
        #[serde(default = "default_clusters")]
        clusters: usize,
        #[serde(default = "default_spread")]
        spread: f64,
    },
    /// Round t has its only usable (zero-cost) box at t mod n.
    AdversarialAlternating { n: usize, t: usize },
}

fn default_density() -> f64 {
    0.5
}

fn default_clusters() -> usize {
    3
}

fn default_spread() -> f64 {
    0.5
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OnEmpty {
    #[default]
    Regenerate,
    Error,
}

impl GeneratorSpec {
    pub fn n(&self) -> usize {
        match self {
            GeneratorSpec::Mssc { n, .. }
            | GeneratorSpec::UniformCosts { n, .. }
            | GeneratorSpec::Clustered { n, .. }
            | GeneratorSpec::AdversarialAlternating { n, .. } => *n,
        }
    }

    pub fn t(&self) -> usize {
        match self {
            GeneratorSpec::Mssc { t, .. }
            | GeneratorSpec::UniformCosts { t, .. }
            | GeneratorSpec::Clustered { t, .. }
            | GeneratorSpec::AdversarialAlternating { t, .. } => *t,
        }
    }

    pub fn with_t(&self, new_t: usize) -> GeneratorSpec {
        let mut spec = self.clone();
        match &mut spec {
            GeneratorSpec::Mssc { t, .. }
            | GeneratorSpec::UniformCosts { t, .. }
            | GeneratorSpec::Clustered { t, .. }
            | GeneratorSpec::AdversarialAlternating { t, .. } => *t = new_t,
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let (n, t) = (self.n(), self.t());
        if n == 0 || n > 64 {
            return Err(Error::invalid_argument(format!("generator needs 1 <= n <= 64, got {n}")));
        }
        if t == 0 {
            return Err(Error::invalid_argument("generator needs t >= 1"));
        }
        match self {
            GeneratorSpec::Mssc { density, .. } => {
                if !(*density > 0.0 && *density <= 1.0) {
                    return Err(Error::invalid_argument(format!(
                        "mssc density must be in (0, 1], got {density}"
                    )));
                }
            }
            GeneratorSpec::Clustered { clusters, spread, .. } => {
                if *clusters == 0 {
                    return Err(Error::invalid_argument("clustered needs clusters >= 1"));
                }
                if !(*spread >= 0.0 && spread.is_finite()) {
                    return Err(Error::invalid_argument("clustered spread must be finite and >= 0"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// A full adversary stream plus provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSequence {
    pub n: usize,
    pub scenarios: Vec<Scenario>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

const MSSC_REGENERATE_LIMIT: usize = 10_000;

impl ScenarioSequence {
    pub fn generate(spec: &GeneratorSpec, seed: u64) -> Result<ScenarioSequence> {
        spec.validate()?;
        let (n, t) = (spec.n(), spec.t());
        let mut rng = derive_rng(seed, &[stream::GENERATOR]);
        let mut scenarios = Vec::with_capacity(t);
        match spec {
            GeneratorSpec::Mssc { density, on_empty, .. } => {
                for _ in 0..t {
                    scenarios.push(sample_mssc(&mut rng, n, *density, *on_empty)?);
                }
            }
            GeneratorSpec::UniformCosts { .. } => {
                for _ in 0..t {
                    let costs = (0..n)
                        .map(|_| Cost::Finite(rng.gen::<f64>() * n as f64))
                        .collect();
                    scenarios.push(Scenario::new(costs));
                }
            }
            GeneratorSpec::Clustered { clusters, spread, .. } => {
                let centers: Vec<Vec<f64>> = (0..*clusters)
                    .map(|_| (0..n).map(|_| rng.gen::<f64>() * n as f64).collect())
                    .collect();
                for _ in 0..t {
                    let c = rng.gen_range(0..*clusters);
                    let costs = (0..n)
                        .map(|i| {
                            let noise = (rng.gen::<f64>() * 2.0 - 1.0) * spread;
                            Cost::Finite((centers[c][i] + noise).clamp(0.0, n as f64))
                        })
                        .collect();
                    scenarios.push(Scenario::new(costs));
                }
            }
            GeneratorSpec::AdversarialAlternating { .. } => {
                for round in 0..t {
                    let zero_at = round % n;
                    let costs = (0..n)
                        .map(|i| if i == zero_at { Cost::Finite(0.0) } else { Cost::Infinite })
                        .collect();
                    scenarios.push(Scenario::new(costs));
                }
            }
        }
        Ok(ScenarioSequence {
            n,
            scenarios,
            provenance: Provenance { generator: Some(spec.clone()), seed: Some(seed) },
        })
    }

    pub fn from_scenarios(n: usize, scenarios: Vec<Scenario>) -> Result<ScenarioSequence> {
        for (idx, s) in scenarios.iter().enumerate() {
            if s.n() != n {
                return Err(Error::invalid_instance(format!(
                    "scenario {idx} has {} costs, expected {n}",
                    s.n()
                )));
            }
        }
        Ok(ScenarioSequence { n, scenarios, provenance: Provenance::default() })
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    /// Deduplicates by value. Returns (unique scenarios, multiplicities,
    /// round -> unique index map).
    pub fn unique_with_counts(&self) -> (Vec<Scenario>, Vec<usize>, Vec<usize>) {
        let mut unique: Vec<Scenario> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        let mut map: Vec<usize> = Vec::with_capacity(self.len());
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        for s in &self.scenarios {
            let key = s.canonical_key();
            let idx = *index.entry(key).or_insert_with(|| {
                unique.push(s.clone());
                counts.push(0);
                unique.len() - 1
            });
            counts[idx] += 1;
            map.push(idx);
        }
        (unique, counts, map)
    }

    /// Stable content hash over n and all cost bit patterns.
    pub fn content_hash(&self) -> u64 {
        let mut h = fnv1a(0xcbf2_9ce4_8422_2325, &(self.n as u64).to_le_bytes());
        for s in &self.scenarios {
            for bits in s.canonical_key() {
                h = fnv1a(h, &bits.to_le_bytes());
            }
        }
        h
    }
}

fn sample_mssc(rng: &mut ChaCha8Rng, n: usize, density: f64, on_empty: OnEmpty) -> Result<Scenario> {
    for _ in 0..MSSC_REGENERATE_LIMIT {
        let costs: Vec<Cost> = (0..n)
            .map(|_| if rng.gen::<f64>() < density { Cost::Finite(0.0) } else { Cost::Infinite })
            .collect();
        if costs.iter().any(|c| c.is_finite()) {
            return Ok(Scenario::new(costs));
        }
        if matches!(on_empty, OnEmpty::Error) {
            return Err(Error::invalid_instance(
                "mssc generator produced a scenario with no usable box",
            ));
        }
    }
    Err(Error::invalid_instance(format!(
        "mssc generator failed to produce a coverable scenario in {MSSC_REGENERATE_LIMIT} attempts"
    )))
}

pub fn fnv1a(mut hash: u64, bytes: &[u8]) -> u64 {
    if hash == 0 {
        hash = 0xcbf2_9ce4_8422_2325;
    }
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

/// On-disk instance: scenario table plus optional matroid.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub scenarios: Vec<Vec<Cost>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<Provenance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matroid: Option<Matroid>,
}

impl InstanceFile {
    pub fn from_sequence(seq: &ScenarioSequence, matroid: Option<Matroid>) -> InstanceFile {
        InstanceFile {
            n: seq.n,
            t: seq.len(),
            scenarios: seq.scenarios.iter().map(|s| s.costs.clone()).collect(),
            metadata: Some(seq.provenance.clone()),
            matroid,
        }
    }

    pub fn into_sequence(self) -> Result<(ScenarioSequence, Option<Matroid>)> {
        if self.t != self.scenarios.len() {
            return Err(Error::invalid_instance(format!(
                "instance declares T={} but carries {} scenarios",
                self.t,
                self.scenarios.len()
            )));
        }
        let scenarios = self.scenarios.into_iter().map(Scenario::new).collect();
        let mut seq = ScenarioSequence::from_scenarios(self.n, scenarios)?;
        if let Some(meta) = self.metadata {
            seq.provenance = meta;
        }
        if let Some(m) = &self.matroid {
            m.validate()?;
            if m.ground_size() != self.n {
                return Err(Error::invalid_instance(format!(
                    "matroid ground size {} does not match n={}",
                    m.ground_size(),
                    self.n
                )));
            }
        }
        Ok((seq, self.matroid))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<InstanceFile> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_caps_oversized_costs() {
        let s = Scenario::new(vec![Cost::Finite(5.0), Cost::Finite(1.0)]);
        let normalized = s.normalize();
        assert_eq!(normalized.costs, vec![Cost::Infinite, Cost::Finite(1.0)]);
        // Idempotent.
        assert_eq!(normalized.normalize(), normalized);
        // Boundary value n stays finite.
        let edge = Scenario::new(vec![Cost::Finite(2.0), Cost::Finite(0.0)]).normalize();
        assert_eq!(edge.costs[0], Cost::Finite(2.0));
    }

    #[test]
    fn transcript_cost_counts_openings_and_selection() {
        let mut t = InspectionTranscript::new(0);
        t.open(0, Cost::Infinite);
        t.open(1, Cost::Finite(0.0));
        t.select(1);
        assert_eq!(t.cost(&ConstraintFamily::Select1), Cost::Finite(2.0));
    }

    #[test]
    fn transcript_cost_infinite_when_selection_infeasible() {
        let mut t = InspectionTranscript::new(0);
        t.open(0, Cost::Finite(1.0));
        t.open(1, Cost::Finite(2.0));
        // Nothing selected under select-1.
        assert_eq!(t.cost(&ConstraintFamily::Select1), Cost::Infinite);
        // Selecting an unusable box is also infinite.
        let mut t2 = InspectionTranscript::new(0);
        t2.open(0, Cost::Infinite);
        t2.select(0);
        assert_eq!(t2.cost(&ConstraintFamily::Select1), Cost::Infinite);
    }

    #[test]
    fn transcript_cost_matroid_requires_basis() {
        let m = Matroid::Partition { parts: vec![vec![0, 1], vec![2]], capacities: vec![1, 1] };
        let family = ConstraintFamily::MatroidBasis { matroid: m };
        let mut t = InspectionTranscript::new(0);
        t.open(0, Cost::Finite(0.5));
        t.open(1, Cost::Finite(0.25));
        t.open(2, Cost::Finite(1.0));
        t.select(0);
        t.select(2);
        assert_eq!(t.cost(&family), Cost::Finite(3.0 + 1.5));
        // {0, 1} exceeds the first part's capacity: not independent.
        let mut bad = InspectionTranscript::new(0);
        bad.open(0, Cost::Finite(0.5));
        bad.open(1, Cost::Finite(0.25));
        bad.select(0);
        bad.select(1);
        assert_eq!(bad.cost(&family), Cost::Infinite);
    }

    #[test]
    fn generators_are_deterministic_per_seed() {
        for spec in [
            GeneratorSpec::Mssc { n: 5, t: 40, density: 0.4, on_empty: OnEmpty::Regenerate },
            GeneratorSpec::UniformCosts { n: 4, t: 40 },
            GeneratorSpec::Clustered { n: 4, t: 40, clusters: 2, spread: 0.3 },
            GeneratorSpec::AdversarialAlternating { n: 3, t: 40 },
        ] {
            let a = ScenarioSequence::generate(&spec, 7).unwrap();
            let b = ScenarioSequence::generate(&spec, 7).unwrap();
            assert_eq!(a, b);
            let c = ScenarioSequence::generate(&spec, 8).unwrap();
            if !matches!(spec, GeneratorSpec::AdversarialAlternating { .. }) {
                assert_ne!(a.scenarios, c.scenarios, "seed must matter for {spec:?}");
            }
        }
    }

    #[test]
    fn mssc_scenarios_always_coverable() {
        let spec = GeneratorSpec::Mssc { n: 6, t: 200, density: 0.15, on_empty: OnEmpty::Regenerate };
        let seq = ScenarioSequence::generate(&spec, 3).unwrap();
        for s in &seq.scenarios {
            assert!(s.costs.iter().any(|c| c.is_finite()));
            for c in &s.costs {
                assert!(matches!(c, Cost::Finite(v) if *v == 0.0) || c.is_infinite());
            }
        }
    }

    #[test]
    fn alternating_rotates_the_single_usable_box() {
        let spec = GeneratorSpec::AdversarialAlternating { n: 2, t: 4 };
        let seq = ScenarioSequence::generate(&spec, 0).unwrap();
        let expect = [
            vec![Cost::Finite(0.0), Cost::Infinite],
            vec![Cost::Infinite, Cost::Finite(0.0)],
            vec![Cost::Finite(0.0), Cost::Infinite],
            vec![Cost::Infinite, Cost::Finite(0.0)],
        ];
        for (s, e) in seq.scenarios.iter().zip(expect) {
            assert_eq!(s.costs, e);
        }
    }

    #[test]
    fn dedup_counts_multiplicities() {
        let spec = GeneratorSpec::AdversarialAlternating { n: 2, t: 5 };
        let seq = ScenarioSequence::generate(&spec, 0).unwrap();
        let (unique, counts, map) = seq.unique_with_counts();
        assert_eq!(unique.len(), 2);
        assert_eq!(counts, vec![3, 2]);
        assert_eq!(map, vec![0, 1, 0, 1, 0]);
    }

    #[test]
    fn instance_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.json");
        let spec = GeneratorSpec::UniformCosts { n: 3, t: 6 };
        let seq = ScenarioSequence::generate(&spec, 11).unwrap();
        let matroid = Some(Matroid::Uniform { n: 3, k: 2 });
        InstanceFile::from_sequence(&seq, matroid.clone()).save(&path).unwrap();
        let (back, m) = InstanceFile::load(&path).unwrap().into_sequence().unwrap();
        assert_eq!(back, seq);
        assert_eq!(m, matroid);
    }

    #[test]
    fn instance_file_rejects_unknown_fields_and_bad_shape() {
        let bad: std::result::Result<InstanceFile, _> =
            serde_json::from_str(r#"{"n":2,"T":1,"scenarios":[[0.0,1.0]],"surprise":true}"#);
        assert!(bad.is_err());
        let mismatched: InstanceFile =
            serde_json::from_str(r#"{"n":2,"T":3,"scenarios":[[0.0,1.0]]}"#).unwrap();
        assert!(mismatched.into_sequence().is_err());
    }

    #[test]
    fn best_selection_value_per_family() {
        let costs = vec![Cost::Finite(2.0), Cost::Finite(0.5), Cost::Infinite, Cost::Finite(1.0)];
        assert_eq!(ConstraintFamily::Select1.best_selection_value(&costs), Cost::Finite(0.5));
        assert_eq!(
            ConstraintFamily::SelectK { k: 2 }.best_selection_value(&costs),
            Cost::Finite(1.5)
        );
        assert_eq!(
            ConstraintFamily::SelectK { k: 4 }.best_selection_value(&costs),
            Cost::Infinite
        );
    }
}
