//! Dense two-phase simplex for small standard-form programs
//! `min c·x  s.t.  A x = b, x >= 0`, with Bland's rule against cycling.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Simplex multipliers `y` with `A^T y <= c` at optimality.
    pub duals: Vec<f64>,
}

const PIVOT_EPS: f64 = 1e-11;

struct Tableau {
    rows: usize,
    /// Structural plus artificial columns.
    cols: usize,
    /// `rows x (cols + 1)`, last column is the right-hand side.
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let width = self.cols + 1;
        let p = self.at(row, col);
        for c in 0..width {
            self.data[row * width + c] /= p;
        }
        for r in 0..self.rows {
            if r == row {
                continue;
            }
            let f = self.at(r, col);
            if f != 0.0 {
                for c in 0..width {
                    let v = self.data[row * width + c];
                    self.data[r * width + c] -= f * v;
                }
                // keep the pivot column exact
                self.data[r * width + col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Reduced costs for objective `cost` (length `cols`) in the current basis.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for (c, dc) in d.iter_mut().enumerate() {
                    *dc -= cb * self.at(r, c);
                }
            }
        }
        d
    }

    /// Runs primal simplex iterations; `allowed` masks columns that may enter.
    /// Returns false if unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<bool> {
        let limit = 50_000 + 100 * self.cols;
        for _ in 0..limit {
            let d = self.reduced_costs(cost);
            let Some(enter) = (0..self.cols).find(|&c| allowed[c] && d[c] < -1e-10) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, enter);
                if a > PIVOT_EPS {
                    let ratio = self.rhs(r) / a;
                    match leave {
                        None => leave = Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12
                                || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                            {
                                leave = Some((r, ratio));
                            }
                        }
                    }
                }
            }
            match leave {
                None => return Ok(false),
                Some((r, _)) => self.pivot(r, enter),
            }
        }
        Err(Error::Lp("simplex iteration limit reached".into()))
    }
}

/// Solves `min c·x` subject to `A x = b`, `x >= 0`, where `a` is row-major with
/// `b.len()` rows of `c.len()` entries.
pub fn solve_standard(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<LpSolution> {
    let m = b.len();
    let n = c.len();
    if a.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: a.len(),
        });
    }
    if let Some(row) = a.iter().find(|row| row.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: row.len(),
        });
    }
    let cols = n + m;
    let width = cols + 1;
    let mut data = vec![0.0; m * width];
    let mut sign = vec![1.0; m];
    for r in 0..m {
        if b[r] < 0.0 {
            sign[r] = -1.0;
        }
        for j in 0..n {
            data[r * width + j] = sign[r] * a[r][j];
        }
        data[r * width + n + r] = 1.0;
        data[r * width + cols] = sign[r] * b[r];
    }
    let mut t = Tableau {
        rows: m,
        cols,
        data,
        basis: (n..n + m).collect(),
    };

    // phase 1: minimize the sum of artificials
    let mut phase1 = vec![0.0; cols];
    phase1[n..].iter_mut().for_each(|x| *x = 1.0);
    t.optimize(&phase1, &vec![true; cols])?;
    let infeasibility: f64 = (0..m).filter(|&r| t.basis[r] >= n).map(|r| t.rhs(r)).sum();
    let scale = 1.0 + b.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if infeasibility > 1e-9 * scale {
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            x: vec![],
            objective: f64::NAN,
            duals: vec![],
        });
    }
    // drive remaining artificials out of the basis where possible
    for r in 0..m {
        if t.basis[r] >= n {
            if let Some(col) = (0..n).find(|&j| t.at(r, j).abs() > 1e-9) {
                t.pivot(r, col);
            }
        }
    }

    let mut phase2 = c.to_vec();
    phase2.extend(std::iter::repeat_n(0.0, m));
    let mut allowed = vec![true; cols];
    allowed[n..].iter_mut().for_each(|x| *x = false);
    if !t.optimize(&phase2, &allowed)? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: vec![],
            objective: f64::NEG_INFINITY,
            duals: vec![],
        });
    }

    let mut x = vec![0.0; n];
    for r in 0..m {
        if t.basis[r] < n {
            x[t.basis[r]] = t.rhs(r).max(0.0);
        }
    }
    let objective = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    // reduced cost of artificial column r is -y'_r; undo the row sign flips
    let d = t.reduced_costs(&phase2);
    let duals = (0..m).map(|r| -d[n + r] * sign[r]).collect();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
        duals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_program_and_duals() {
        // min -x1 - 2 x2  s.t. x1 + x2 + s1 = 4, x1 + 3 x2 + s2 = 6
        let c = [-1.0, -2.0, 0.0, 0.0];
        let a = vec![vec![1.0, 1.0, 1.0, 0.0], vec![1.0, 3.0, 0.0, 1.0]];
        let sol = solve_standard(&c, &a, &[4.0, 6.0]).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] - 3.0).abs() < 1e-12 && (sol.x[1] - 1.0).abs() < 1e-12);
        assert!((sol.objective + 5.0).abs() < 1e-12);
        // strong duality b·y = c·x
        assert!((4.0 * sol.duals[0] + 6.0 * sol.duals[1] + 5.0).abs() < 1e-12);
    }

    #[test]
    fn negative_rhs_and_statuses() {
        // x1 - x2 = -1, min x1 + x2  -> x = (0, 1)
        let sol = solve_standard(&[1.0, 1.0], &[vec![1.0, -1.0]], &[-1.0]).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-12);
        assert!((-sol.duals[0] - 1.0).abs() < 1e-12);

        let sol = solve_standard(&[1.0], &[vec![1.0]], &[-1.0]).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);

        let sol = solve_standard(&[-1.0, 0.0], &[vec![1.0, -1.0]], &[0.0]).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn redundant_rows() {
        let a = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        let sol = solve_standard(&[1.0, 2.0], &a, &[1.0, 2.0]).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-12);
    }
}
