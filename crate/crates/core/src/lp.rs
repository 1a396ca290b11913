//! Small dense two-phase simplex solver.
//!
//! Solves `min cᵀx  s.t.  Ax = b, x ≥ 0` with a full tableau and Bland's
//! anti-cycling rule. Problem sizes in this crate are a few dozen variables at
//! most, so nothing here is sparse or clever; what matters is that results are
//! deterministic and that iteration-limit failures are reported instead of being
//! folded into "infeasible".

use thiserror::Error;

/// Pivot elements smaller than this are treated as zero.
const PIVOT_TOL: f64 = 1e-11;
/// Reduced costs above `-COST_TOL` count as non-improving.
const COST_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("simplex did not converge in phase {phase} after {iterations} pivots")]
    IterationLimit { phase: u8, iterations: usize },
    #[error("lp dimension mismatch: {0}")]
    Dimension(String),
    #[error("lp has non-finite data")]
    NonFinite,
}

/// `min cᵀx  s.t.  Ax = b, x ≥ 0`, dense row-major `A`.
#[derive(Debug, Clone)]
pub struct StandardLp {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpStatus {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible { residual: f64 },
    Unbounded,
}

impl LpStatus {
    pub fn is_feasible(&self) -> bool {
        !matches!(self, LpStatus::Infeasible { .. })
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        self.rhs[r] /= p;
        let prow = self.rows[r].clone();
        let prhs = self.rhs[r];
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][col];
            if f != 0.0 {
                for (v, pv) in self.rows[i].iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
                self.rows[i][col] = 0.0;
                self.rhs[i] -= f * prhs;
                if self.rhs[i] < 0.0 && self.rhs[i] > -1e-13 {
                    self.rhs[i] = 0.0;
                }
            }
        }
        self.basis[r] = col;
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for (r, &bv) in self.basis.iter().enumerate() {
            let cb = cost[bv];
            if cb != 0.0 {
                for (dj, a) in d.iter_mut().zip(&self.rows[r]) {
                    *dj -= cb * a;
                }
            }
        }
        d
    }

    /// Runs Bland-rule pivots minimizing `cost`; columns with `allowed[j] == false`
    /// never enter. Returns `false` when the problem is unbounded.
    fn optimize(
        &mut self,
        cost: &[f64],
        allowed: &[bool],
        phase: u8,
        limit: usize,
    ) -> Result<bool, LpError> {
        for _ in 0..limit {
            let d = self.reduced_costs(cost);
            let entering = (0..self.ncols).find(|&j| allowed[j] && d[j] < -COST_TOL);
            let Some(col) = entering else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][col];
                if a > PIVOT_TOL {
                    let ratio = self.rhs[r] / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12
                                || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Ok(false),
                Some((r, _)) => self.pivot(r, col),
            }
        }
        Err(LpError::IterationLimit {
            phase,
            iterations: limit,
        })
    }
}

/// Solves a standard-form LP.
///
/// Rows are rescaled to unit max-norm before solving, so `feas_tol` bounds the
/// summed phase-one infeasibility in those normalized units.
pub fn solve(lp: &StandardLp, feas_tol: f64) -> Result<LpStatus, LpError> {
    let m = lp.a.len();
    let n = lp.c.len();
    if lp.b.len() != m {
        return Err(LpError::Dimension(format!("{} rows but {} rhs", m, lp.b.len())));
    }
    if lp.a.iter().any(|row| row.len() != n) {
        return Err(LpError::Dimension(format!("rows must have {n} columns")));
    }
    if lp
        .a
        .iter()
        .flatten()
        .chain(&lp.b)
        .chain(&lp.c)
        .any(|v| !v.is_finite())
    {
        return Err(LpError::NonFinite);
    }

    let ncols = n + m;
    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for (i, (arow, &bi)) in lp.a.iter().zip(&lp.b).enumerate() {
        let scale = arow
            .iter()
            .fold(bi.abs(), |acc, v| acc.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let sign = if bi < 0.0 { -1.0 } else { 1.0 };
        let mut row: Vec<f64> = arow.iter().map(|v| sign * v / scale).collect();
        row.resize(ncols, 0.0);
        row[n + i] = 1.0;
        rows.push(row);
        rhs.push(sign * bi / scale);
    }
    let mut tab = Tableau {
        rows,
        rhs,
        basis: (n..n + m).collect(),
        ncols,
    };
    let limit = 200 * (ncols + m) + 1000;

    // Phase one: drive the artificial sum to zero.
    let mut phase1_cost = vec![0.0; ncols];
    for c in phase1_cost.iter_mut().skip(n) {
        *c = 1.0;
    }
    let all = vec![true; ncols];
    tab.optimize(&phase1_cost, &all, 1, limit)?;
    let residual: f64 = tab
        .basis
        .iter()
        .zip(&tab.rhs)
        .filter(|(&bv, _)| bv >= n)
        .map(|(_, &v)| v.max(0.0))
        .sum();
    if residual > feas_tol {
        return Ok(LpStatus::Infeasible { residual });
    }

    // Pivot remaining (zero-level) artificials out; drop rows that are redundant.
    let mut r = 0;
    while r < tab.rows.len() {
        if tab.basis[r] >= n {
            let col = (0..n).find(|&j| tab.rows[r][j].abs() > 1e-9);
            match col {
                Some(j) => {
                    tab.pivot(r, j);
                    r += 1;
                }
                None => {
                    tab.rows.remove(r);
                    tab.rhs.remove(r);
                    tab.basis.remove(r);
                }
            }
        } else {
            r += 1;
        }
    }

    let mut cost = lp.c.clone();
    cost.resize(ncols, 0.0);
    let mut allowed = vec![true; ncols];
    for a in allowed.iter_mut().skip(n) {
        *a = false;
    }
    if !tab.optimize(&cost, &allowed, 2, limit)? {
        return Ok(LpStatus::Unbounded);
    }
    let mut x = vec![0.0; n];
    for (row, &bv) in tab.basis.iter().enumerate() {
        if bv < n {
            x[bv] = tab.rhs[row].max(0.0);
        }
    }
    let objective = x.iter().zip(&lp.c).map(|(a, b)| a * b).sum();
    Ok(LpStatus::Optimal { x, objective })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(a: Vec<Vec<f64>>, b: Vec<f64>, c: Vec<f64>) -> StandardLp {
        StandardLp { a, b, c }
    }

    #[test]
    fn simple_optimum() {
        // max x + y, x + 2y <= 4, 3x + y <= 6  → (1.6, 1.2), value 2.8
        let p = lp(
            vec![vec![1.0, 2.0, 1.0, 0.0], vec![3.0, 1.0, 0.0, 1.0]],
            vec![4.0, 6.0],
            vec![-1.0, -1.0, 0.0, 0.0],
        );
        match solve(&p, 1e-9).unwrap() {
            LpStatus::Optimal { x, objective } => {
                assert!((x[0] - 1.6).abs() < 1e-12);
                assert!((x[1] - 1.2).abs() < 1e-12);
                assert!((objective + 2.8).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn infeasible_and_unbounded() {
        let p = lp(vec![vec![1.0, 1.0]], vec![-1.0], vec![0.0, 0.0]);
        assert!(matches!(solve(&p, 1e-9).unwrap(), LpStatus::Infeasible { .. }));
        let p = lp(vec![vec![1.0, -1.0]], vec![0.0], vec![-1.0, 0.0]);
        assert_eq!(solve(&p, 1e-9).unwrap(), LpStatus::Unbounded);
    }

    #[test]
    fn redundant_rows() {
        let p = lp(
            vec![vec![1.0, 1.0], vec![2.0, 2.0]],
            vec![1.0, 2.0],
            vec![1.0, 0.0],
        );
        match solve(&p, 1e-9).unwrap() {
            LpStatus::Optimal { x, .. } => {
                assert!(x[0].abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's classic cycling instance; Bland's rule must terminate.
        let p = lp(
            vec![
                vec![0.25, -8.0, -1.0, 9.0, 1.0, 0.0, 0.0],
                vec![0.5, -12.0, -0.5, 3.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            ],
            vec![0.0, 0.0, 1.0],
            vec![-0.75, 20.0, -0.5, 6.0, 0.0, 0.0, 0.0],
        );
        match solve(&p, 1e-9).unwrap() {
            LpStatus::Optimal { objective, .. } => assert!((objective + 1.25).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_input() {
        let p = lp(vec![vec![1.0]], vec![f64::NAN], vec![0.0]);
        assert_eq!(solve(&p, 1e-9), Err(LpError::NonFinite));
        let p = lp(vec![vec![1.0, 2.0]], vec![1.0], vec![0.0]);
        assert!(matches!(solve(&p, 1e-9), Err(LpError::Dimension(_))));
    }
}
