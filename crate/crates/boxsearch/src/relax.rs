//! Fractional schedule relaxations.
//!
//! A fractional schedule is a doubly stochastic matrix x where x[i][t] is the
//! mass of box i opened in slot t (slots numbered 1..=n). For a fixed
//! scenario, the relaxed round cost is the optimum of a small assignment
//! program over z[i][t] <= x[i][t]. The single-selection case has a
//! closed-form greedy evaluation; the k-selection and matroid-basis cases are
//! evaluated by cutting planes over the exact LP solver. Each evaluation also
//! yields a subgradient with respect to x, which is what the learner consumes.


use crate::cost::Cost;
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, Sense};
use crate::matroid::{mask_members, Matroid};
use crate::model::{ConstraintFamily, Scenario};

/// Dense n x n matrix, row-major; rows are boxes, columns are slots.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Matrix {
        Matrix { n, data: vec![0.0; n * n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Matrix {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            for t in 0..n {
                m.set(i, t, f(i, t));
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, t: usize) -> f64 {
        self.data[i * self.n + t]
    }

    #[inline]
    pub fn set(&mut self, i: usize, t: usize, v: f64) {
        self.data[i * self.n + t] = v;
    }

    #[inline]
    pub fn add_assign(&mut self, i: usize, t: usize, v: f64) {
        self.data[i * self.n + t] += v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn scaled(&self, factor: f64) -> Matrix {
        Matrix { n: self.n, data: self.data.iter().map(|v| v * factor).collect() }
    }

    pub fn add(&mut self, other: &Matrix) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn axpy(&mut self, other: &Matrix, factor: f64) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }

    pub fn dot(&self, other: &Matrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn l1_distance(&self, other: &Matrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum()
    }

    /// Per-box running mass: out[i][t] = sum over slots <= t of x[i][.].
    pub fn prefix_by_slot(&self) -> Matrix {
        let mut p = Matrix::zeros(self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for t in 0..self.n {
                acc += self.get(i, t);
                p.set(i, t, acc);
            }
        }
        p
    }
}

/// A doubly stochastic opening schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct FractionalSchedule {
    mat: Matrix,
}

impl FractionalSchedule {
    /// Validates row and column sums against `tol`.
    pub fn new(mat: Matrix, tol: f64) -> Result<FractionalSchedule> {
        let residual = birkhoff_residual(&mat);
        if residual > tol {
            return Err(Error::invalid_argument(format!(
                "schedule is not doubly stochastic: residual {residual:e} > {tol:e}"
            )));
        }
        if mat.data.iter().any(|&v| v < -tol) {
            return Err(Error::invalid_argument("schedule has negative mass"));
        }
        Ok(FractionalSchedule { mat })
    }

    /// Trusted constructor for matrices produced by internal projections.
    pub fn new_unchecked(mat: Matrix) -> FractionalSchedule {
        FractionalSchedule { mat }
    }

    pub fn uniform(n: usize) -> FractionalSchedule {
        let v = 1.0 / n as f64;
        FractionalSchedule { mat: Matrix::from_fn(n, |_, _| v) }
    }

    /// perm[t] = box opened in slot t.
    pub fn from_permutation(perm: &[usize]) -> FractionalSchedule {
        let n = perm.len();
        let mut mat = Matrix::zeros(n);
        for (t, &i) in perm.iter().enumerate() {
            mat.set(i, t, 1.0);
        }
        FractionalSchedule { mat }
    }

    pub fn n(&self) -> usize {
        self.mat.n
    }

    pub fn matrix(&self) -> &Matrix {
        &self.mat
    }

    pub fn get(&self, i: usize, t: usize) -> f64 {
        self.mat.get(i, t)
    }

    pub fn birkhoff_residual(&self) -> f64 {
        birkhoff_residual(&self.mat)
    }
}

pub fn birkhoff_residual(mat: &Matrix) -> f64 {
    let n = mat.n;
    let mut worst = 0.0f64;
    for i in 0..n {
        let sum: f64 = (0..n).map(|t| mat.get(i, t)).sum();
        worst = worst.max((sum - 1.0).abs());
    }
    for t in 0..n {
        let sum: f64 = (0..n).map(|i| mat.get(i, t)).sum();
        worst = worst.max((sum - 1.0).abs());
    }
    for &v in &mat.data {
        if v < 0.0 {
            worst = worst.max(-v);
        }
    }
    worst
}

/// Result of evaluating the single-selection relaxation at one scenario.
#[derive(Clone, Debug)]
pub struct SpaValue {
    /// Total relaxed cost; Infinite when no usable box exists.
    pub value: Cost,
    /// Slot-weighted part (sum over z of the slot number).
    pub opening: f64,
    /// Value-weighted part (sum over z of the box cost).
    pub selection: f64,
    /// Positive assignment mass, (box, slot, mass).
    pub z: Vec<(usize, usize, f64)>,
    /// Key of the pair where cumulative mass first reached one.
    theta: f64,
}

impl SpaValue {
    pub fn finite_value(&self) -> f64 {
        self.opening + self.selection
    }
}

/// Greedy evaluation: fill pairs (i, t) in increasing key t+1+c_i, each up to
/// capacity x[i][t], until total mass one. Ties break on (slot, box).
pub fn eval_spa(x: &FractionalSchedule, scenario: &Scenario) -> Result<SpaValue> {
    let n = x.n();
    if scenario.n() != n {
        return Err(Error::invalid_argument(format!(
            "scenario has {} boxes, schedule has {n}",
            scenario.n()
        )));
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (i, c) in scenario.costs.iter().enumerate() {
        if let Some(v) = c.finite() {
            for t in 0..n {
                pairs.push(((t + 1) as f64 + v, t, i));
            }
        }
    }
    if pairs.is_empty() {
        return Ok(SpaValue { value: Cost::Infinite, opening: 0.0, selection: 0.0, z: Vec::new(), theta: f64::INFINITY });
    }
    pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut remaining = 1.0f64;
    let mut opening = 0.0;
    let mut selection = 0.0;
    let mut z = Vec::new();
    let mut theta = pairs.last().unwrap().0;
    for &(key, t, i) in &pairs {
        let cap = x.get(i, t).max(0.0);
        if cap <= 0.0 {
            continue;
        }
        let take = cap.min(remaining);
        let cost_i = key - (t + 1) as f64;
        opening += (t + 1) as f64 * take;
        selection += cost_i * take;
        z.push((i, t, take));
        remaining -= take;
        if remaining <= 1e-15 {
            theta = key;
            remaining = 0.0;
            break;
        }
    }
    if remaining > 0.0 {
        // Doubly stochastic scaling leaves row sums within ~1e-10 of one, so a
        // scenario with a single usable box can come up a hair short of unit
        // mass. Absorb that dust into the last consumed pair; anything larger
        // means a malformed schedule.
        if remaining > MASS_SLACK_TOL || z.is_empty() {
            return Err(Error::invalid_argument(format!(
                "schedule mass insufficient to place one unit ({remaining:e} missing)"
            )));
        }
        let (i, t, mass) = z.last_mut().unwrap();
        let cost_i = scenario.costs[*i].finite().unwrap();
        opening += (*t + 1) as f64 * remaining;
        selection += cost_i * remaining;
        *mass += remaining;
        theta = (*t + 1) as f64 + cost_i;
    }
    Ok(SpaValue {
        value: Cost::Finite(opening + selection),
        opening,
        selection,
        z,
        theta,
    })
}

/// Subgradient of the single-selection relaxed cost in x:
/// G[i][t] = -max(0, theta - key(i, t)), zero on unusable boxes.
pub fn subgrad_spa(x: &FractionalSchedule, scenario: &Scenario) -> Result<Matrix> {
    let spa = eval_spa(x, scenario)?;
    if spa.value.is_infinite() {
        return Err(Error::invalid_argument(
            "subgradient undefined: scenario has no usable box",
        ));
    }
    let n = x.n();
    let mut g = Matrix::zeros(n);
    for (i, c) in scenario.costs.iter().enumerate() {
        if let Some(v) = c.finite() {
            for t in 0..n {
                let key = (t + 1) as f64 + v;
                let slack = spa.theta - key;
                if slack > 0.0 {
                    g.set(i, t, -slack);
                }
            }
        }
    }
    Ok(g)
}

pub fn eval_and_subgrad_spa(
    x: &FractionalSchedule,
    scenario: &Scenario,
) -> Result<(SpaValue, Matrix)> {
    let spa = eval_spa(x, scenario)?;
    if spa.value.is_infinite() {
        return Err(Error::invalid_argument(
            "subgradient undefined: scenario has no usable box",
        ));
    }
    let n = x.n();
    let mut g = Matrix::zeros(n);
    for (i, c) in scenario.costs.iter().enumerate() {
        if let Some(v) = c.finite() {
            for t in 0..n {
                let key = (t + 1) as f64 + v;
                let slack = spa.theta - key;
                if slack > 0.0 {
                    g.set(i, t, -slack);
                }
            }
        }
    }
    Ok((spa, g))
}

/// Result of the k-selection / matroid-basis relaxations.
#[derive(Clone, Debug)]
pub struct CoverageValue {
    pub value: Cost,
    /// Sum over slots of (1 - y_t).
    pub opening: f64,
    /// Sum of cost-weighted assignment mass.
    pub selection: f64,
    pub z: Vec<(usize, usize, f64)>,
    /// Fractional completion level per slot, nondecreasing.
    pub y: Vec<f64>,
    /// Duals of the capacity rows z <= x; the subgradient in x.
    pub capacity_duals: Matrix,
    pub cuts_added: usize,
}

const CUT_VIOLATION_TOL: f64 = 1e-7;
const MAX_CUTS: usize = 500;
const MASS_SLACK_TOL: f64 = 1e-6;

struct CoverageProblem<'a> {
    x: &'a FractionalSchedule,
    scenario: &'a Scenario,
    /// (box, slot) per z variable; y variables follow.
    z_vars: Vec<(usize, usize)>,
    n: usize,
}

impl<'a> CoverageProblem<'a> {
    fn new(x: &'a FractionalSchedule, scenario: &'a Scenario) -> CoverageProblem<'a> {
        let n = x.n();
        let mut z_vars = Vec::new();
        for (i, c) in scenario.costs.iter().enumerate() {
            if c.is_finite() {
                for t in 0..n {
                    z_vars.push((i, t));
                }
            }
        }
        CoverageProblem { x, scenario, z_vars, n }
    }

    fn y_var(&self, t: usize) -> usize {
        self.z_vars.len() + t
    }

    fn base_program(&self) -> (LinearProgram, Vec<usize>) {
        // minimize  sum_t (1 - y_t) + sum z c   ==  const n - sum y + sum z c
        let num_vars = self.z_vars.len() + self.n;
        let mut objective = vec![0.0; num_vars];
        for (idx, &(i, _)) in self.z_vars.iter().enumerate() {
            objective[idx] = self.scenario.costs[i].finite().unwrap();
        }
        for t in 0..self.n {
            objective[self.y_var(t)] = -1.0;
        }
        let mut lp = LinearProgram::minimize(objective);
        let mut capacity_rows = Vec::with_capacity(self.z_vars.len());
        for (idx, &(i, t)) in self.z_vars.iter().enumerate() {
            let row = lp.add_le(vec![(idx, 1.0)], self.x.get(i, t).max(0.0));
            capacity_rows.push(row);
        }
        for t in 0..self.n {
            lp.add_le(vec![(self.y_var(t), 1.0)], 1.0);
        }
        (lp, capacity_rows)
    }

    /// Adds the cut: sum over boxes outside `mask`, slots strictly before t,
    /// of z >= deficiency * y_t. y_t measures completion entering slot t, so
    /// slot t itself never contributes. t = n addresses the virtual slot past
    /// the horizon, where completion is pinned to one: there the cut forces
    /// the plan to actually place the full deficiency.
    fn add_coverage_cut(&self, lp: &mut LinearProgram, mask: u64, t: usize, deficiency: f64) {
        let mut coeffs = Vec::new();
        for (idx, &(i, tt)) in self.z_vars.iter().enumerate() {
            if tt < t && mask >> i & 1 == 0 {
                coeffs.push((idx, 1.0));
            }
        }
        if t < self.n {
            coeffs.push((self.y_var(t), -deficiency));
            lp.add_row(coeffs, Sense::Ge, 0.0);
        } else {
            lp.add_row(coeffs, Sense::Ge, deficiency);
        }
    }

    fn extract(&self, lp: &LinearProgram, capacity_rows: &[usize], cuts: usize) -> Result<CoverageValue> {
        let sol = lp.solve()?.optimal()?;
        let mut z = Vec::new();
        let mut selection = 0.0;
        for (idx, &(i, t)) in self.z_vars.iter().enumerate() {
            let v = sol.primal[idx];
            if v > 1e-12 {
                z.push((i, t, v));
                selection += self.scenario.costs[i].finite().unwrap() * v;
            }
        }
        let y: Vec<f64> = (0..self.n).map(|t| sol.primal[self.y_var(t)].clamp(0.0, 1.0)).collect();
        let opening: f64 = y.iter().map(|v| 1.0 - v).sum();
        let mut capacity_duals = Matrix::zeros(self.n);
        for (idx, &(i, t)) in self.z_vars.iter().enumerate() {
            let mut d = sol.duals[capacity_rows[idx]];
            if d > 0.0 {
                d = 0.0; // capacity can only help: clamp stray positives
            }
            capacity_duals.set(i, t, d);
        }
        Ok(CoverageValue {
            value: Cost::Finite(opening + selection),
            opening,
            selection,
            z,
            y,
            capacity_duals,
            cuts_added: cuts,
        })
    }

    /// Per-box z mass in slots strictly before t, from an LP solution.
    /// t = n gives the total mass per box.
    fn prefix_masses(&self, primal: &[f64], t: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.n];
        for (idx, &(i, tt)) in self.z_vars.iter().enumerate() {
            if tt < t {
                p[i] += primal[idx];
            }
        }
        p
    }
}

/// Cutting-plane evaluation of the k-selection relaxation.
///
/// Feasible set: z <= x, 0 <= y <= 1, and for every slot t and every box
/// set A with |A| < k: mass outside A strictly before t covers (k - |A|) y_t.
pub fn eval_spa_k(x: &FractionalSchedule, scenario: &Scenario, k: usize) -> Result<CoverageValue> {
    let n = x.n();
    ConstraintFamily::SelectK { k }.validate(n)?;
    if scenario.finite_count() < k {
        return Ok(infinite_coverage(n));
    }
    let prob = CoverageProblem::new(x, scenario);
    let (mut lp, capacity_rows) = prob.base_program();
    // Seed with the A = empty cut per slot, including the virtual end slot.
    for t in 0..=n {
        prob.add_coverage_cut(&mut lp, 0, t, k as f64);
    }
    let mut cuts = n + 1;
    loop {
        let sol = lp.solve()?.optimal()?;
        let mut violated: Vec<(u64, usize, f64, f64)> = Vec::new();
        for t in 0..=n {
            let prefix = prob.prefix_masses(&sol.primal, t);
            let y_t = if t < n { sol.primal[prob.y_var(t)] } else { 1.0 };
            let total: f64 = prefix.iter().sum();
            // For each candidate size, A = boxes with the largest prefix mass.
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| prefix[b].partial_cmp(&prefix[a]).unwrap().then(a.cmp(&b)));
            let mut best: Option<(u64, f64, f64)> = None;
            let mut mask = 0u64;
            let mut inside = 0.0;
            for size in 0..k {
                if size > 0 {
                    let i = order[size - 1];
                    mask |= 1 << i;
                    inside += prefix[i];
                }
                let deficiency = (k - size) as f64;
                let violation = deficiency * y_t - (total - inside);
                if best.map_or(true, |(_, _, v)| violation > v) {
                    best = Some((mask, deficiency, violation));
                }
            }
            if let Some((mask, deficiency, violation)) = best {
                if violation > CUT_VIOLATION_TOL {
                    violated.push((mask, t, deficiency, violation));
                }
            }
        }
        if violated.is_empty() {
            return prob.extract(&lp, &capacity_rows, cuts);
        }
        for (mask, t, deficiency, _) in violated {
            if cuts >= MAX_CUTS {
                return Err(Error::NotConverged {
                    context: "k-selection cutting planes",
                    residual: CUT_VIOLATION_TOL,
                    limit: MAX_CUTS,
                });
            }
            prob.add_coverage_cut(&mut lp, mask, t, deficiency);
            cuts += 1;
        }
    }
}

/// Cutting-plane evaluation of the matroid-basis relaxation.
///
/// Feasible set: z <= x, 0 <= y <= 1, rank caps z(A) <= r(A), and coverage
/// cuts: mass outside A strictly before slot t covers (r(ground) - r(A)) y_t.
pub fn eval_spa_matroid(
    x: &FractionalSchedule,
    scenario: &Scenario,
    matroid: &Matroid,
) -> Result<CoverageValue> {
    let n = x.n();
    ConstraintFamily::MatroidBasis { matroid: matroid.clone() }.validate(n)?;
    let full_rank = matroid.full_rank();
    if full_rank == 0 {
        // Nothing to select: y = 1 everywhere at zero cost.
        return Ok(CoverageValue {
            value: Cost::Finite(0.0),
            opening: 0.0,
            selection: 0.0,
            z: Vec::new(),
            y: vec![1.0; n],
            capacity_duals: Matrix::zeros(n),
            cuts_added: 0,
        });
    }
    if matroid.rank_mask(scenario.finite_mask()) < full_rank {
        return Ok(infinite_coverage(n));
    }
    let prob = CoverageProblem::new(x, scenario);
    let (mut lp, capacity_rows) = prob.base_program();
    let mut cuts = 0usize;
    // Seed: total rank cap, singleton caps, and the A = empty coverage cuts.
    add_rank_cut(&prob, &mut lp, (1u64 << n) - 1, full_rank as f64);
    cuts += 1;
    for i in 0..n {
        add_rank_cut(&prob, &mut lp, 1u64 << i, matroid.rank(&[i]) as f64);
        cuts += 1;
    }
    for t in 0..=n {
        prob.add_coverage_cut(&mut lp, 0, t, full_rank as f64);
        cuts += 1;
    }
    loop {
        let sol = lp.solve()?.optimal()?;
        let mut new_cuts: Vec<CutSpec> = Vec::new();

        // Rank caps: maximize z-mass(A) - r(A).
        let total_mass = prob.prefix_masses(&sol.primal, n);
        let (mask, gap) = matroid.max_weight_minus_scaled_rank(&total_mass, 1.0)?;
        if gap > CUT_VIOLATION_TOL {
            new_cuts.push(CutSpec::Rank { mask });
        }

        // Coverage: maximize (r_full - r(A)) y_t - mass outside A.
        for t in 0..=n {
            let y_t = if t < n { sol.primal[prob.y_var(t)] } else { 1.0 };
            if y_t <= 0.0 {
                continue;
            }
            let prefix = prob.prefix_masses(&sol.primal, t);
            let total: f64 = prefix.iter().sum();
            let (mask, inner) = matroid.max_weight_minus_scaled_rank(&prefix, y_t)?;
            let violation = inner + full_rank as f64 * y_t - total;
            if violation > CUT_VIOLATION_TOL {
                new_cuts.push(CutSpec::Coverage { mask, t });
            }
        }

        if new_cuts.is_empty() {
            return prob.extract(&lp, &capacity_rows, cuts);
        }
        for cut in new_cuts {
            if cuts >= MAX_CUTS {
                return Err(Error::NotConverged {
                    context: "matroid cutting planes",
                    residual: CUT_VIOLATION_TOL,
                    limit: MAX_CUTS,
                });
            }
            match cut {
                CutSpec::Rank { mask } => {
                    add_rank_cut(&prob, &mut lp, mask, matroid.rank_mask(mask) as f64)
                }
                CutSpec::Coverage { mask, t } => {
                    let deficiency = (full_rank - matroid.rank_mask(mask)) as f64;
                    prob.add_coverage_cut(&mut lp, mask, t, deficiency);
                }
            }
            cuts += 1;
        }
    }
}

enum CutSpec {
    Rank { mask: u64 },
    Coverage { mask: u64, t: usize },
}

fn add_rank_cut(prob: &CoverageProblem<'_>, lp: &mut LinearProgram, mask: u64, rank: f64) {
    let mut coeffs = Vec::new();
    for (idx, &(i, _)) in prob.z_vars.iter().enumerate() {
        if mask >> i & 1 == 1 {
            coeffs.push((idx, 1.0));
        }
    }
    if coeffs.is_empty() {
        return;
    }
    lp.add_le(coeffs, rank);
}

fn infinite_coverage(n: usize) -> CoverageValue {
    CoverageValue {
        value: Cost::Infinite,
        opening: n as f64,
        selection: 0.0,
        z: Vec::new(),
        y: vec![0.0; n],
        capacity_duals: Matrix::zeros(n),
        cuts_added: 0,
    }
}

/// Subgradient of the k-selection relaxation: duals of the capacity rows.
pub fn subgrad_spa_k(x: &FractionalSchedule, scenario: &Scenario, k: usize) -> Result<Matrix> {
    let cv = eval_spa_k(x, scenario, k)?;
    if cv.value.is_infinite() {
        return Err(Error::invalid_argument(
            "subgradient undefined: scenario cannot cover k selections",
        ));
    }
    Ok(cv.capacity_duals)
}

/// Subgradient of the matroid-basis relaxation: duals of the capacity rows.
pub fn subgrad_spa_matroid(
    x: &FractionalSchedule,
    scenario: &Scenario,
    matroid: &Matroid,
) -> Result<Matrix> {
    let cv = eval_spa_matroid(x, scenario, matroid)?;
    if cv.value.is_infinite() {
        return Err(Error::invalid_argument(
            "subgradient undefined: scenario cannot cover a basis",
        ));
    }
    Ok(cv.capacity_duals)
}

/// Family-dispatched relaxed cost and subgradient, as consumed by the learner.
pub fn eval_family(
    family: &ConstraintFamily,
    x: &FractionalSchedule,
    scenario: &Scenario,
) -> Result<(f64, Matrix)> {
    match family {
        ConstraintFamily::Select1 => {
            let (spa, g) = eval_and_subgrad_spa(x, scenario)?;
            Ok((spa.finite_value(), g))
        }
        ConstraintFamily::SelectK { k } => {
            let cv = eval_spa_k(x, scenario, *k)?;
            if cv.value.is_infinite() {
                return Err(Error::invalid_argument(
                    "relaxed cost infinite: scenario cannot cover k selections",
                ));
            }
            let duals = cv.capacity_duals.clone();
            Ok((cv.opening + cv.selection, duals))
        }
        ConstraintFamily::MatroidBasis { matroid } => {
            let cv = eval_spa_matroid(x, scenario, matroid)?;
            if cv.value.is_infinite() {
                return Err(Error::invalid_argument(
                    "relaxed cost infinite: scenario cannot cover a basis",
                ));
            }
            let duals = cv.capacity_duals.clone();
            Ok((cv.opening + cv.selection, duals))
        }
    }
}

/// Family-dispatched relaxed cost only.
pub fn value_family(
    family: &ConstraintFamily,
    x: &FractionalSchedule,
    scenario: &Scenario,
) -> Result<Cost> {
    match family {
        ConstraintFamily::Select1 => Ok(eval_spa(x, scenario)?.value),
        ConstraintFamily::SelectK { k } => Ok(eval_spa_k(x, scenario, *k)?.value),
        ConstraintFamily::MatroidBasis { matroid } => {
            Ok(eval_spa_matroid(x, scenario, matroid)?.value)
        }
    }
}

/// Exhaustive reference LP for the single-selection relaxation.
pub fn eval_spa_reference(x: &FractionalSchedule, scenario: &Scenario) -> Result<Cost> {
    let n = x.n();
    let mut vars = Vec::new();
    for (i, c) in scenario.costs.iter().enumerate() {
        if let Some(v) = c.finite() {
            for t in 0..n {
                vars.push((i, t, (t + 1) as f64 + v));
            }
        }
    }
    if vars.is_empty() {
        return Ok(Cost::Infinite);
    }
    let mut lp = LinearProgram::minimize(vars.iter().map(|&(_, _, key)| key).collect());
    for (idx, &(i, t, _)) in vars.iter().enumerate() {
        lp.add_le(vec![(idx, 1.0)], x.get(i, t).max(0.0));
    }
    lp.add_eq((0..vars.len()).map(|idx| (idx, 1.0)).collect(), 1.0);
    let sol = lp.solve()?.optimal()?;
    Ok(Cost::Finite(sol.objective))
}

/// Exhaustive reference LP for the k / matroid relaxations: every subset cut
/// is materialized. Exponential in n; verification sizes only.
pub fn eval_coverage_reference(
    x: &FractionalSchedule,
    scenario: &Scenario,
    family: &ConstraintFamily,
) -> Result<Cost> {
    let n = x.n();
    if n > 12 {
        return Err(Error::invalid_argument(
            "reference coverage LP enumerates all subsets; n > 12 refused",
        ));
    }
    let (full_rank, rank_of): (usize, Box<dyn Fn(u64) -> usize>) = match family {
        ConstraintFamily::Select1 => (1, Box::new(|mask: u64| (mask.count_ones() as usize).min(1))),
        ConstraintFamily::SelectK { k } => {
            let k = *k;
            (k, Box::new(move |mask: u64| (mask.count_ones() as usize).min(k)))
        }
        ConstraintFamily::MatroidBasis { matroid } => {
            let m = matroid.clone();
            (m.full_rank(), Box::new(move |mask: u64| m.rank_mask(mask)))
        }
    };
    if full_rank == 0 {
        return Ok(Cost::Finite(0.0));
    }
    let usable = scenario.finite_mask();
    if rank_of(usable) < full_rank {
        return Ok(Cost::Infinite);
    }
    let prob = CoverageProblem::new(x, scenario);
    let (mut lp, _) = prob.base_program();
    let full = (1u64 << n) - 1;
    for mask in 0..=full {
        let r = rank_of(mask);
        if matches!(family, ConstraintFamily::MatroidBasis { .. }) && mask != 0 {
            add_rank_cut(&prob, &mut lp, mask, r as f64);
        }
        if r < full_rank {
            let deficiency = (full_rank - r) as f64;
            for t in 0..=n {
                prob.add_coverage_cut(&mut lp, mask, t, deficiency);
            }
        }
    }
    let sol = lp.solve()?.optimal()?;
    let y_sum: f64 = (0..n).map(|t| sol.primal[prob.y_var(t)]).sum();
    let z_cost: f64 = prob
        .z_vars
        .iter()
        .enumerate()
        .map(|(idx, &(i, _))| sol.primal[idx] * scenario.costs[i].finite().unwrap())
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(Cost::Finite(n as f64 - y_sum + z_cost))
}

pub fn members_of(mask: u64, n: usize) -> Vec<usize> {
    mask_members(mask, n)
}
