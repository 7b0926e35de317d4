//! Matroid ground structures over box indices.
//!
//! The selection stage of the search problem may be constrained to a matroid
//! basis. Uniform and partition matroids carry exact cut separation used by
//! the fractional programs; graphic matroids supply rank/independence only
//! and fall back to exhaustive subset scans when a cut must be found.

use serde::{Deserialize, Serialize};

use crate::cost::Cost;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Matroid {
    /// Independent sets are those of size at most `k`.
    Uniform { n: usize, k: usize },
    /// Ground set split into disjoint parts, each with its own cardinality cap.
    Partition { parts: Vec<Vec<usize>>, capacities: Vec<usize> },
    /// Ground set is an edge list over `vertices`; independent sets are forests.
    Graphic { vertices: usize, edges: Vec<(usize, usize)> },
}

/// Exhaustive separation is limited to ground sets this size.
const EXHAUSTIVE_LIMIT: usize = 20;

impl Matroid {
    pub fn validate(&self) -> Result<()> {
        match self {
            Matroid::Uniform { n, k } => {
                if *n == 0 {
                    return Err(Error::invalid_instance("uniform matroid needs n >= 1"));
                }
                if *k > *n {
                    return Err(Error::invalid_instance(format!(
                        "uniform matroid cap k={k} exceeds ground size n={n}"
                    )));
                }
                Ok(())
            }
            Matroid::Partition { parts, capacities } => {
                if parts.len() != capacities.len() {
                    return Err(Error::invalid_instance(format!(
                        "partition matroid has {} parts but {} capacities",
                        parts.len(),
                        capacities.len()
                    )));
                }
                let n = self.ground_size();
                let mut seen = vec![false; n];
                for part in parts {
                    for &i in part {
                        if i >= n || seen[i] {
                            return Err(Error::invalid_instance(format!(
                                "partition matroid parts must partition 0..{n}, element {i} repeated or out of range"
                            )));
                        }
                        seen[i] = true;
                    }
                }
                if seen.iter().any(|&s| !s) {
                    return Err(Error::invalid_instance(
                        "partition matroid parts must cover every box",
                    ));
                }
                Ok(())
            }
            Matroid::Graphic { vertices, edges } => {
                for &(u, v) in edges {
                    if u >= *vertices || v >= *vertices {
                        return Err(Error::invalid_instance(format!(
                            "graphic matroid edge ({u},{v}) exceeds vertex count {vertices}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Number of boxes the matroid is defined over.
    pub fn ground_size(&self) -> usize {
        match self {
            Matroid::Uniform { n, .. } => *n,
            Matroid::Partition { parts, .. } => parts.iter().map(Vec::len).sum(),
            Matroid::Graphic { edges, .. } => edges.len(),
        }
    }

    /// Rank of the subset encoded as a bitmask over box indices.
    pub fn rank_mask(&self, mask: u64) -> usize {
        match self {
            Matroid::Uniform { k, .. } => (mask.count_ones() as usize).min(*k),
            Matroid::Partition { parts, capacities } => parts
                .iter()
                .zip(capacities)
                .map(|(part, &cap)| {
                    let inside = part.iter().filter(|&&i| mask >> i & 1 == 1).count();
                    inside.min(cap)
                })
                .sum(),
            Matroid::Graphic { vertices, edges } => {
                // Union-find over edge endpoints; rank = merges performed.
                let mut parent: Vec<usize> = (0..*vertices).collect();
                fn find(parent: &mut [usize], mut x: usize) -> usize {
                    while parent[x] != x {
                        parent[x] = parent[parent[x]];
                        x = parent[x];
                    }
                    x
                }
                let mut rank = 0;
                for (idx, &(u, v)) in edges.iter().enumerate() {
                    if mask >> idx & 1 == 1 {
                        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
                        if ru != rv {
                            parent[ru] = rv;
                            rank += 1;
                        }
                    }
                }
                rank
            }
        }
    }

    pub fn rank(&self, members: &[usize]) -> usize {
        let mut mask = 0u64;
        for &i in members {
            mask |= 1 << i;
        }
        self.rank_mask(mask)
    }

    pub fn is_independent_mask(&self, mask: u64) -> bool {
        self.rank_mask(mask) == mask.count_ones() as usize
    }

    pub fn full_rank(&self) -> usize {
        let n = self.ground_size();
        let mask = if n >= 64 { u64::MAX } else { (1u64 << n) - 1 };
        self.rank_mask(mask)
    }

    /// Minimum-weight basis over the finite-cost boxes, greedy by (cost, id).
    /// Returns None when the finite-cost boxes do not span the full rank.
    pub fn min_weight_basis(&self, costs: &[Cost]) -> Option<(u64, f64)> {
        let mut order: Vec<(f64, usize)> = costs
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.finite().map(|v| (v, i)))
            .collect();
        order.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let target = self.full_rank();
        let mut mask = 0u64;
        let mut weight = 0.0;
        let mut size = 0;
        for (v, i) in order {
            let candidate = mask | 1 << i;
            if self.rank_mask(candidate) > size {
                mask = candidate;
                weight += v;
                size += 1;
                if size == target {
                    return Some((mask, weight));
                }
            }
        }
        if target == 0 {
            Some((0, 0.0))
        } else {
            None
        }
    }

    /// Maximizes w(A) - scale * r(A) over all subsets A, for nonnegative
    /// weights and scale. Exact for uniform and partition matroids via
    /// sorted prefix scans; exhaustive for graphic matroids at small n.
    pub fn max_weight_minus_scaled_rank(&self, w: &[f64], scale: f64) -> Result<(u64, f64)> {
        debug_assert_eq!(w.len(), self.ground_size());
        debug_assert!(scale >= 0.0);
        match self {
            Matroid::Uniform { n, k } => {
                let mut order: Vec<usize> = (0..*n).collect();
                order.sort_by(|&a, &b| w[b].partial_cmp(&w[a]).unwrap().then(a.cmp(&b)));
                let mut best = (0u64, 0.0f64);
                let mut mask = 0u64;
                let mut sum = 0.0;
                for (m, &i) in order.iter().enumerate() {
                    mask |= 1 << i;
                    sum += w[i];
                    let val = sum - scale * ((m + 1).min(*k) as f64);
                    if val > best.1 {
                        best = (mask, val);
                    }
                }
                Ok(best)
            }
            Matroid::Partition { parts, capacities } => {
                // w(A) and r(A) both decompose across parts.
                let mut total_mask = 0u64;
                let mut total_val = 0.0;
                for (part, &cap) in parts.iter().zip(capacities) {
                    let mut order: Vec<usize> = part.clone();
                    order.sort_by(|&a, &b| w[b].partial_cmp(&w[a]).unwrap().then(a.cmp(&b)));
                    let mut best = (0u64, 0.0f64);
                    let mut mask = 0u64;
                    let mut sum = 0.0;
                    for (j, &i) in order.iter().enumerate() {
                        mask |= 1 << i;
                        sum += w[i];
                        let val = sum - scale * ((j + 1).min(cap) as f64);
                        if val > best.1 {
                            best = (mask, val);
                        }
                    }
                    total_mask |= best.0;
                    total_val += best.1;
                }
                Ok((total_mask, total_val))
            }
            Matroid::Graphic { .. } => {
                let n = self.ground_size();
                if n > EXHAUSTIVE_LIMIT {
                    return Err(Error::invalid_argument(format!(
                        "graphic matroid separation is exhaustive and limited to {EXHAUSTIVE_LIMIT} boxes, got {n}"
                    )));
                }
                let mut best = (0u64, 0.0f64);
                for mask in 0..(1u64 << n) {
                    let mut sum = 0.0;
                    for i in 0..n {
                        if mask >> i & 1 == 1 {
                            sum += w[i];
                        }
                    }
                    let val = sum - scale * self.rank_mask(mask) as f64;
                    if val > best.1 {
                        best = (mask, val);
                    }
                }
                Ok(best)
            }
        }
    }
}

pub fn mask_members(mask: u64, n: usize) -> Vec<usize> {
    (0..n).filter(|&i| mask >> i & 1 == 1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force_gap(m: &Matroid, w: &[f64], scale: f64) -> f64 {
        let n = m.ground_size();
        let mut best = 0.0f64;
        for mask in 0..(1u64 << n) {
            let sum: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| w[i]).sum();
            let val = sum - scale * m.rank_mask(mask) as f64;
            if val > best {
                best = val;
            }
        }
        best
    }

    fn sample_matroids() -> Vec<Matroid> {
        vec![
            Matroid::Uniform { n: 6, k: 2 },
            Matroid::Uniform { n: 6, k: 6 },
            Matroid::Partition {
                parts: vec![vec![0, 1, 2], vec![3, 4], vec![5]],
                capacities: vec![2, 1, 1],
            },
            Matroid::Graphic {
                vertices: 4,
                edges: vec![(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (1, 3)],
            },
        ]
    }

    #[test]
    fn rank_axioms_on_all_subsets() {
        for m in sample_matroids() {
            m.validate().unwrap();
            let n = m.ground_size();
            let full = 1u64 << n;
            for mask in 0..full {
                let r = m.rank_mask(mask);
                assert!(r <= mask.count_ones() as usize);
                // Monotone + submodular step for every extension by one box.
                for i in 0..n {
                    if mask >> i & 1 == 0 {
                        let r_plus = m.rank_mask(mask | 1 << i);
                        assert!(r_plus >= r && r_plus <= r + 1);
                    }
                }
            }
            assert_eq!(m.rank_mask(0), 0);
        }
    }

    #[test]
    fn submodularity_over_random_pairs() {
        // r(A) + r(B) >= r(A|B) + r(A&B)
        for m in sample_matroids() {
            let n = m.ground_size();
            let full = 1u64 << n;
            for a in 0..full {
                for b in [a / 2, a ^ (full - 1), (a * 7 + 3) % full] {
                    let lhs = m.rank_mask(a) + m.rank_mask(b);
                    let rhs = m.rank_mask(a | b) + m.rank_mask(a & b);
                    assert!(lhs >= rhs, "submodularity failed for {a:b}, {b:b}");
                }
            }
        }
    }

    #[test]
    fn independence_matches_rank() {
        for m in sample_matroids() {
            let n = m.ground_size();
            for mask in 0..(1u64 << n) {
                assert_eq!(
                    m.is_independent_mask(mask),
                    m.rank_mask(mask) == mask.count_ones() as usize
                );
            }
        }
    }

    #[test]
    fn greedy_basis_is_minimal() {
        let m = Matroid::Partition {
            parts: vec![vec![0, 1], vec![2, 3]],
            capacities: vec![1, 1],
        };
        let costs = vec![
            Cost::Finite(3.0),
            Cost::Finite(1.0),
            Cost::Infinite,
            Cost::Finite(2.0),
        ];
        let (mask, weight) = m.min_weight_basis(&costs).unwrap();
        assert_eq!(mask, 0b1010);
        assert_eq!(weight, 3.0);

        // Dropping box 3 leaves the second part uncoverable.
        let costs_bad = vec![Cost::Finite(3.0), Cost::Finite(1.0), Cost::Infinite, Cost::Infinite];
        assert!(m.min_weight_basis(&costs_bad).is_none());
    }

    proptest! {
        #[test]
        fn separation_matches_brute_force(
            weights in proptest::collection::vec(0.0f64..3.0, 6),
            scale in 0.0f64..2.0,
            which in 0usize..4,
        ) {
            let m = &sample_matroids()[which];
            let (_, val) = m.max_weight_minus_scaled_rank(&weights, scale).unwrap();
            let brute = brute_force_gap(m, &weights, scale);
            prop_assert!((val - brute).abs() <= 1e-9 * (1.0 + brute.abs()),
                "separation {val} vs brute {brute}");
        }
    }
}
