//! Dense two-phase simplex for `min c.x  s.t.  A x = b, x >= 0`.
//!
//! Sized for the finite-instance problems in [`crate::alpha`]: tens of rows,
//! a few thousand columns.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{input, Result};

const EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

/// Equality-form linear program. Rows of `a` are dense.
#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl LinearProgram {
    pub fn new(columns: usize) -> Self {
        Self {
            cost: vec![0.0; columns],
            a: Vec::new(),
            b: Vec::new(),
        }
    }

    pub fn columns(&self) -> usize {
        self.cost.len()
    }

    /// Adds a column with the given cost; existing rows get a zero entry.
    pub fn add_column(&mut self, cost: f64) -> usize {
        self.cost.push(cost);
        for row in &mut self.a {
            row.push(0.0);
        }
        self.cost.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, rhs: f64) {
        self.a.push(coeffs);
        self.b.push(rhs);
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        let n = self.cost.len();
        let m = self.a.len();
        if self.a.iter().any(|r| r.len() != n) || self.b.len() != m {
            return input("constraint matrix shape mismatch");
        }
        if self.cost.iter().chain(self.b.iter()).chain(self.a.iter().flatten()).any(|v| !v.is_finite()) {
            return input("linear program data must be finite");
        }
        Ok(Tableau::build(self).run(&self.cost))
    }
}

struct Tableau {
    m: usize,
    n: usize,
    /// `m` rows of `n + m + 1` entries (original, artificial, rhs).
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    /// Columns allowed to enter.
    active: Vec<bool>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.cost.len();
        let m = lp.a.len();
        let width = n + m + 1;
        let mut rows = Vec::with_capacity(m);
        for (i, (r, &bi)) in lp.a.iter().zip(&lp.b).enumerate() {
            let sign = if bi < 0.0 { -1.0 } else { 1.0 };
            let mut row = vec![0.0; width];
            for (dst, &v) in row.iter_mut().zip(r) {
                *dst = sign * v;
            }
            row[n + i] = 1.0;
            row[width - 1] = sign * bi;
            rows.push(row);
        }
        let mut active = vec![true; n + m];
        active[n..].iter_mut().for_each(|a| *a = false);
        Tableau {
            m,
            n,
            rows,
            basis: (n..n + m).collect(),
            active,
        }
    }

    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.n + self.m]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        self.rows[r].iter_mut().for_each(|v| *v /= p);
        let pivot_row = core::mem::take(&mut self.rows[r]);
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, &pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.rows[r] = pivot_row;
        self.basis[r] = c;
    }

    /// Reduced costs for cost vector `c` (length `n + m`).
    fn reduced(&self, c: &[f64]) -> Vec<f64> {
        let mut d = c.to_vec();
        for (i, &bi) in self.basis.iter().enumerate() {
            let cb = c[bi];
            if cb != 0.0 {
                for (dj, &a) in d.iter_mut().zip(&self.rows[i]) {
                    *dj -= cb * a;
                }
            }
        }
        d
    }

    /// Primal simplex on the current basis. Returns false when unbounded.
    fn optimize(&mut self, c: &[f64]) -> bool {
        let width = self.n + self.m;
        let mut d = self.reduced(c);
        let mut degenerate_run = 0usize;
        loop {
            let bland = degenerate_run > 50;
            let mut enter = None;
            let mut best = -EPS;
            for j in 0..width {
                if self.active[j] && d[j] < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d[j];
                }
            }
            let Some(col) = enter else { return true };
            let mut leave = None;
            let mut ratio = f64::INFINITY;
            for i in 0..self.m {
                let a = self.rows[i][col];
                if a > EPS {
                    let r = self.rhs(i) / a;
                    let better = r < ratio - EPS
                        || (r <= ratio + EPS && leave.is_some_and(|l: usize| self.basis[i] < self.basis[l]));
                    if better {
                        ratio = r;
                        leave = Some(i);
                    }
                }
            }
            let Some(row) = leave else { return false };
            degenerate_run = if ratio <= EPS { degenerate_run + 1 } else { 0 };
            self.pivot(row, col);
            let f = d[col];
            for (dj, &a) in d.iter_mut().zip(&self.rows[row]) {
                *dj -= f * a;
            }
        }
    }

    fn run(mut self, cost: &[f64]) -> LpOutcome {
        let (n, m) = (self.n, self.m);
        // phase one: minimize the sum of artificials
        let mut c1 = vec![0.0; n + m];
        c1[n..].iter_mut().for_each(|v| *v = 1.0);
        self.optimize(&c1);
        let infeas: f64 = (0..m).filter(|&i| self.basis[i] >= n).map(|i| self.rhs(i)).sum();
        let scale = 1.0 + self.rows.iter().map(|r| r[n + m].abs()).fold(0.0, f64::max);
        if infeas > 1e-7 * scale {
            return LpOutcome::Infeasible;
        }
        // drive remaining artificials out of the basis
        for i in 0..m {
            if self.basis[i] >= n {
                if let Some(j) = (0..n).find(|&j| self.rows[i][j].abs() > EPS) {
                    self.pivot(i, j);
                }
            }
        }
        let mut c2 = vec![0.0; n + m];
        c2[..n].copy_from_slice(cost);
        if !self.optimize(&c2) {
            return LpOutcome::Unbounded;
        }
        let mut x = vec![0.0; n];
        for (i, &bi) in self.basis.iter().enumerate() {
            if bi < n {
                x[bi] = self.rhs(i).max(0.0);
            }
        }
        let value = x.iter().zip(cost).map(|(a, b)| a * b).sum();
        LpOutcome::Optimal { x, value }
    }
}
