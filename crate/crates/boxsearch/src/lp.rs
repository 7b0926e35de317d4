//! Dense two-phase simplex over f64 with dual extraction.
//!
//! Built for desk-scale verification programs (hundreds of rows): the full
//! tableau is kept dense, artificial columns double as an explicit basis
//! inverse so row duals come out exactly, and every optimum is certified
//! against primal residuals and dual feasibility before it is returned.
//! Anti-cycling: Dantzig pricing switches to Bland's rule after a stall.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
struct Row {
    coeffs: Vec<(usize, f64)>,
    sense: Sense,
    rhs: f64,
}

/// Minimize c.x subject to the added rows and x >= 0.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub objective: f64,
    pub primal: Vec<f64>,
    /// One dual per added row, signed so that d(objective)/d(rhs) = dual.
    pub duals: Vec<f64>,
}

#[derive(Clone, Debug)]
pub enum Verdict {
    Optimal(Solution),
    Infeasible,
    Unbounded,
}

impl Verdict {
    pub fn optimal(self) -> Result<Solution> {
        match self {
            Verdict::Optimal(s) => Ok(s),
            Verdict::Infeasible => Err(Error::Infeasible("lp has no feasible point".into())),
            Verdict::Unbounded => Err(Error::Unbounded("lp objective unbounded below".into())),
        }
    }
}

const PIVOT_EPS: f64 = 1e-9;
const REDUCED_COST_TOL: f64 = 1e-9;
const RESIDUAL_TOL: f64 = 1e-9;
const MAX_ITERS: usize = 200_000;

impl LinearProgram {
    pub fn minimize(objective: Vec<f64>) -> LinearProgram {
        LinearProgram { objective, rows: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        debug_assert!(coeffs.iter().all(|&(j, _)| j < self.num_vars()));
        self.rows.push(Row { coeffs, sense, rhs });
        self.rows.len() - 1
    }

    pub fn add_le(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.add_row(coeffs, Sense::Le, rhs)
    }

    pub fn add_ge(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.add_row(coeffs, Sense::Ge, rhs)
    }

    pub fn add_eq(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.add_row(coeffs, Sense::Eq, rhs)
    }

    pub fn solve(&self) -> Result<Verdict> {
        Tableau::build(self).solve(self)
    }
}

struct Tableau {
    m: usize,
    /// structural | slack | artificial columns, then rhs.
    cols: usize,
    n_struct: usize,
    art_of_row: Vec<usize>,
    flipped: Vec<bool>,
    tab: Vec<Vec<f64>>,
    basis: Vec<usize>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Tableau {
        let m = lp.rows.len();
        let n = lp.num_vars();
        let n_slack = lp
            .rows
            .iter()
            .filter(|r| !matches!(r.sense, Sense::Eq))
            .count();
        let cols = n + n_slack + m;
        let mut tab = vec![vec![0.0; cols + 1]; m];
        let mut art_of_row = vec![0; m];
        let mut flipped = vec![false; m];
        let mut next_slack = n;
        for (r, row) in lp.rows.iter().enumerate() {
            let flip = row.rhs < 0.0;
            flipped[r] = flip;
            let sign = if flip { -1.0 } else { 1.0 };
            for &(j, v) in &row.coeffs {
                tab[r][j] += sign * v;
            }
            match row.sense {
                Sense::Le => {
                    tab[r][next_slack] = sign;
                    next_slack += 1;
                }
                Sense::Ge => {
                    tab[r][next_slack] = -sign;
                    next_slack += 1;
                }
                Sense::Eq => {}
            }
            let art = n + n_slack + r;
            art_of_row[r] = art;
            tab[r][art] = 1.0;
            tab[r][cols] = sign * row.rhs;
        }
        let basis = art_of_row.clone();
        Tableau { m, cols, n_struct: n, art_of_row, flipped, tab, basis }
    }

    fn reduced_costs(&self, costs: &[f64]) -> (Vec<f64>, f64) {
        // r_j = c_j - c_B . (B^-1 a_j); objective = c_B . x_B
        let mut reduced = costs.to_vec();
        let mut obj = 0.0;
        for r in 0..self.m {
            let cb = costs[self.basis[r]];
            if cb != 0.0 {
                obj += cb * self.tab[r][self.cols];
                for j in 0..self.cols {
                    reduced[j] -= cb * self.tab[r][j];
                }
            }
        }
        (reduced, obj)
    }

    fn pivot(&mut self, row: usize, col: usize, reduced: &mut [f64], obj: &mut f64) {
        let piv = self.tab[row][col];
        let inv = 1.0 / piv;
        for v in self.tab[row].iter_mut() {
            *v *= inv;
        }
        // Clean the pivot column exactly.
        self.tab[row][col] = 1.0;
        for r in 0..self.m {
            if r == row {
                continue;
            }
            let factor = self.tab[r][col];
            if factor != 0.0 {
                for j in 0..=self.cols {
                    self.tab[r][j] -= factor * self.tab[row][j];
                }
                self.tab[r][col] = 0.0;
            }
        }
        let rfac = reduced[col];
        if rfac != 0.0 {
            for j in 0..self.cols {
                reduced[j] -= rfac * self.tab[row][j];
            }
            reduced[col] = 0.0;
            *obj += rfac * self.tab[row][self.cols];
        }
        self.basis[row] = col;
    }

    /// Runs simplex for the given column costs. `allow` masks enterable
    /// columns. Returns Ok(true) on optimal, Ok(false) on unbounded.
    fn run(&mut self, costs: &[f64], allow: &[bool]) -> Result<(bool, f64)> {
        let (mut reduced, mut obj) = self.reduced_costs(costs);
        let mut bland = false;
        let mut stall = 0usize;
        let stall_limit = 2 * (self.m + self.cols);
        for _ in 0..MAX_ITERS {
            let mut entering = None;
            if bland {
                for j in 0..self.cols {
                    if allow[j] && reduced[j] < -REDUCED_COST_TOL {
                        entering = Some(j);
                        break;
                    }
                }
            } else {
                let mut best = -REDUCED_COST_TOL;
                for j in 0..self.cols {
                    if allow[j] && reduced[j] < best {
                        best = reduced[j];
                        entering = Some(j);
                    }
                }
            }
            let Some(col) = entering else {
                return Ok((true, obj));
            };
            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let a = self.tab[r][col];
                if a > PIVOT_EPS {
                    let ratio = self.tab[r][self.cols] / a;
                    let better = match leaving {
                        None => true,
                        Some((lr, lratio)) => {
                            if (ratio - lratio).abs() <= 1e-12 * (1.0 + lratio.abs()) {
                                if bland {
                                    self.basis[r] < self.basis[lr]
                                } else {
                                    a > self.tab[lr][col]
                                }
                            } else {
                                ratio < lratio
                            }
                        }
                    };
                    if better {
                        leaving = Some((r, ratio));
                    }
                }
            }
            let Some((row, ratio)) = leaving else {
                return Ok((false, obj));
            };
            if ratio <= 1e-12 {
                stall += 1;
                if stall > stall_limit {
                    bland = true;
                }
            } else {
                stall = 0;
            }
            self.pivot(row, col, &mut reduced, &mut obj);
        }
        Err(Error::NotConverged {
            context: "simplex",
            residual: reduced.iter().cloned().fold(0.0, f64::min).abs(),
            limit: MAX_ITERS,
        })
    }

    /// Drives artificials that are still basic (at zero) out of the basis so
    /// phase 2 cannot move them off zero again; blocking them from *entering*
    /// is not enough. Rows with no usable non-artificial entry are redundant
    /// constraints and keep their artificial pinned at zero harmlessly.
    fn purge_artificials(&mut self) {
        let art_start = self.cols - self.m;
        let mut scratch = vec![0.0; self.cols];
        let mut obj = 0.0;
        for r in 0..self.m {
            if self.basis[r] < art_start {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..art_start {
                let a = self.tab[r][j].abs();
                if a > PIVOT_EPS && best.map_or(true, |(_, b)| a > b) {
                    best = Some((j, a));
                }
            }
            if let Some((col, _)) = best {
                self.pivot(r, col, &mut scratch, &mut obj);
            }
        }
    }

    fn solve(mut self, lp: &LinearProgram) -> Result<Verdict> {
        let mut phase1 = vec![0.0; self.cols];
        for &a in &self.art_of_row {
            phase1[a] = 1.0;
        }
        let allow_all: Vec<bool> = (0..self.cols).collect::<Vec<_>>().iter().map(|_| true).collect();
        let (optimal, p1_obj) = self.run(&phase1, &allow_all)?;
        debug_assert!(optimal, "phase 1 is bounded below by zero");
        if p1_obj > 1e-7 {
            return Ok(Verdict::Infeasible);
        }
        self.purge_artificials();

        let mut phase2 = vec![0.0; self.cols];
        phase2[..self.n_struct].copy_from_slice(&lp.objective);
        let mut allow = vec![true; self.cols];
        for &a in &self.art_of_row {
            allow[a] = false;
        }
        let (optimal, obj) = self.run(&phase2, &allow)?;
        if !optimal {
            return Ok(Verdict::Unbounded);
        }

        let mut primal = vec![0.0; self.n_struct];
        for r in 0..self.m {
            if self.basis[r] < self.n_struct {
                primal[self.basis[r]] = self.tab[r][self.cols];
            }
        }

        // Artificial columns hold B^-1, so duals are c_B . B^-1 per row.
        let mut duals = vec![0.0; self.m];
        for i in 0..self.m {
            let col = self.art_of_row[i];
            let mut y = 0.0;
            for r in 0..self.m {
                let cb = phase2[self.basis[r]];
                if cb != 0.0 {
                    y += cb * self.tab[r][col];
                }
            }
            duals[i] = if self.flipped[i] { -y } else { y };
        }

        self.certify(lp, &primal, &duals, obj)?;
        Ok(Verdict::Optimal(Solution { objective: obj, primal, duals }))
    }

    fn certify(&self, lp: &LinearProgram, primal: &[f64], duals: &[f64], obj: f64) -> Result<()> {
        let mut scale = 1.0f64;
        for row in &lp.rows {
            scale = scale.max(row.rhs.abs());
            for &(_, v) in &row.coeffs {
                scale = scale.max(v.abs());
            }
        }
        for &x in primal {
            scale = scale.max(x.abs());
        }
        let tol = RESIDUAL_TOL * scale * (lp.num_vars() as f64).max(1.0).sqrt() * 4.0;
        for (r, row) in lp.rows.iter().enumerate() {
            let lhs: f64 = row.coeffs.iter().map(|&(j, v)| v * primal[j]).sum();
            let viol = match row.sense {
                Sense::Le => lhs - row.rhs,
                Sense::Ge => row.rhs - lhs,
                Sense::Eq => (lhs - row.rhs).abs(),
            };
            if viol > tol {
                return Err(Error::Numerical {
                    context: "simplex",
                    detail: format!("row {r} residual {viol:e} exceeds tolerance {tol:e}"),
                });
            }
        }
        for (j, &x) in primal.iter().enumerate() {
            if x < -tol {
                return Err(Error::Numerical {
                    context: "simplex",
                    detail: format!("variable {j} negative: {x:e}"),
                });
            }
        }
        let check: f64 = lp.objective.iter().zip(primal).map(|(c, x)| c * x).sum();
        if (check - obj).abs() > tol * 16.0 {
            return Err(Error::Numerical {
                context: "simplex",
                detail: format!("objective drift: tableau {obj} vs recomputed {check}"),
            });
        }
        let _ = duals;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::rng::derive_rng;

    #[test]
    fn simple_bounded_lp() {
        // min -x - 2y st x + y <= 4, y <= 2
        let mut lp = LinearProgram::minimize(vec![-1.0, -2.0]);
        lp.add_le(vec![(0, 1.0), (1, 1.0)], 4.0);
        lp.add_le(vec![(1, 1.0)], 2.0);
        let sol = lp.solve().unwrap().optimal().unwrap();
        assert!((sol.objective + 6.0).abs() < 1e-9);
        assert!((sol.primal[0] - 2.0).abs() < 1e-9);
        assert!((sol.primal[1] - 2.0).abs() < 1e-9);
        // Raising the first rhs by one unit buys one more x: dual -1.
        assert!((sol.duals[0] + 1.0).abs() < 1e-9);
        assert!((sol.duals[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + y st x + y = 1, x >= 0.25
        let mut lp = LinearProgram::minimize(vec![1.0, 1.0]);
        lp.add_eq(vec![(0, 1.0), (1, 1.0)], 1.0);
        lp.add_ge(vec![(0, 1.0)], 0.25);
        let sol = lp.solve().unwrap().optimal().unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-9);
        assert!((sol.duals[0] - 1.0).abs() < 1e-9, "equality shadow price");
        assert!(sol.duals[1].abs() < 1e-9, "inactive-ish lower bound");
    }

    #[test]
    fn detects_infeasible() {
        let mut lp = LinearProgram::minimize(vec![1.0]);
        lp.add_le(vec![(0, 1.0)], 1.0);
        lp.add_ge(vec![(0, 1.0)], 2.0);
        assert!(matches!(lp.solve().unwrap(), Verdict::Infeasible));
    }

    #[test]
    fn detects_unbounded() {
        let mut lp = LinearProgram::minimize(vec![-1.0, 0.0]);
        lp.add_le(vec![(1, 1.0)], 1.0);
        assert!(matches!(lp.solve().unwrap(), Verdict::Unbounded));
    }

    #[test]
    fn degenerate_lp_terminates() {
        // Multiple redundant rows through the same vertex.
        let mut lp = LinearProgram::minimize(vec![-1.0, -1.0]);
        lp.add_le(vec![(0, 1.0)], 1.0);
        lp.add_le(vec![(0, 1.0), (1, 0.0)], 1.0);
        lp.add_le(vec![(0, 1.0), (1, 1.0)], 2.0);
        lp.add_le(vec![(1, 1.0)], 1.0);
        let sol = lp.solve().unwrap().optimal().unwrap();
        assert!((sol.objective + 2.0).abs() < 1e-9);
    }

    /// The duals must price rhs perturbations: finite differences of the
    /// optimal value against each row's rhs, skipping kinks.
    #[test]
    fn duals_price_rhs_perturbations() {
        let mut rng = derive_rng(99, &[17]);
        for trial in 0..12 {
            let n = rng.gen_range(2..=5);
            let m = rng.gen_range(2..=6);
            let x0: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.1).collect();
            let mut lp = LinearProgram::minimize(
                (0..n).map(|_| rng.gen::<f64>() * 2.0 - 0.5).collect(),
            );
            let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
            for _ in 0..m {
                let coeffs: Vec<(usize, f64)> =
                    (0..n).map(|j| (j, rng.gen::<f64>() * 2.0 - 1.0)).collect();
                let lhs: f64 = coeffs.iter().map(|&(j, v)| v * x0[j]).sum();
                let rhs = lhs + rng.gen::<f64>() * 0.5;
                lp.add_le(coeffs.clone(), rhs);
                rows.push((coeffs, rhs));
            }
            // Box the polytope so the objective stays bounded.
            for j in 0..n {
                lp.add_le(vec![(j, 1.0)], 3.0);
            }
            let sol = match lp.solve().unwrap() {
                Verdict::Optimal(s) => s,
                _ => continue,
            };
            let h = 1e-5;
            for r in 0..m {
                let solve_with = |delta: f64| -> Option<f64> {
                    let mut lp2 = LinearProgram::minimize(lp.objective.clone());
                    for (rr, (coeffs, rhs)) in rows.iter().enumerate() {
                        let adj = if rr == r { rhs + delta } else { *rhs };
                        lp2.add_le(coeffs.clone(), adj);
                    }
                    for j in 0..n {
                        lp2.add_le(vec![(j, 1.0)], 3.0);
                    }
                    match lp2.solve().unwrap() {
                        Verdict::Optimal(s) => Some(s.objective),
                        _ => None,
                    }
                };
                let (Some(up), Some(down)) = (solve_with(h), solve_with(-h)) else {
                    continue;
                };
                let fwd = (up - sol.objective) / h;
                let bwd = (sol.objective - down) / h;
                if (fwd - bwd).abs() > 1e-6 {
                    continue; // kink: subdifferential, one-sided rates differ
                }
                let fd = (up - down) / (2.0 * h);
                assert!(
                    (fd - sol.duals[r]).abs() < 1e-5,
                    "trial {trial} row {r}: dual {} vs fd {fd}",
                    sol.duals[r]
                );
            }
        }
    }
}
