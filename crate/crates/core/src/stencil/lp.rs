//! Dense two-phase simplex for `min cᵀx  s.t.  A x = b, x ≥ 0`.
//!
//! Pricing is Dantzig's rule with lowest-index tie breaking. After a run of
//! degenerate pivots the phase switches to Bland's rule for the rest of the
//! phase. Ratio-test ties are broken lexicographically on the rows of the
//! inverse basis, which rules out cycling even when round-off blurs the
//! ties. The final basis is re-solved with an LU factorization to strip
//! accumulated round-off from the tableau.

use crate::linalg::Lu;

const REDUCED_COST_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-9;
const FEASIBILITY_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone)]
pub struct LinearProgram {
    /// Constraint matrix, row-major `rows × cols`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpFailure {
    Infeasible { phase_one_objective: f64 },
    Unbounded,
    IterationLimit,
}

struct Tableau {
    /// `rows + 1` rows of width `width`; the last row holds reduced costs and
    /// the last column the right-hand side.
    t: Vec<f64>,
    rows: usize,
    width: usize,
    basis: Vec<usize>,
    /// First artificial column.
    identity_start: usize,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    fn rhs_col(&self) -> usize {
        self.width - 1
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let w = self.width;
        let p = self.t[r * w + col];
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        let pivot_row: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..=self.rows {
            if i == r {
                continue;
            }
            let f = self.t[i * w + col];
            if f != 0.0 {
                let row = &mut self.t[i * w..(i + 1) * w];
                for (x, &pr) in row.iter_mut().zip(&pivot_row) {
                    *x -= f * pr;
                }
                row[col] = 0.0;
            }
        }
        self.basis[r] = col;
    }

    /// Lexicographic comparison of rows `p` and `q` divided by their pivot
    /// entries, over the columns that started as the identity. Rows of the
    /// inverse basis are independent, so the order is strict up to round-off;
    /// exact ties fall back to the lower basic variable.
    fn lex_order(&self, p: usize, q: usize, col: usize) -> std::cmp::Ordering {
        let (ap, aq) = (self.at(p, col), self.at(q, col));
        for j in self.identity_start..self.rhs_col() {
            let (x, y) = (self.at(p, j) / ap, self.at(q, j) / aq);
            if (x - y).abs() > 1e-12 * (1.0 + x.abs().max(y.abs())) {
                return x.total_cmp(&y);
            }
        }
        self.basis[p].cmp(&self.basis[q])
    }

    fn remove_row(&mut self, r: usize) {
        let w = self.width;
        self.t.drain(r * w..(r + 1) * w);
        self.basis.remove(r);
        self.rows -= 1;
    }

    /// Runs simplex iterations over columns `< allowed`.
    fn optimize(&mut self, allowed: usize, max_iter: usize, iters: &mut usize) -> Result<(), LpFailure> {
        let rhs = self.rhs_col();
        let cost = self.rows;
        let mut bland = false;
        let mut degenerate = 0;
        loop {
            let entering = if bland {
                (0..allowed).find(|&j| self.at(cost, j) < -REDUCED_COST_TOL)
            } else {
                let mut best: Option<(usize, f64)> = None;
                for j in 0..allowed {
                    let d = self.at(cost, j);
                    if d < -REDUCED_COST_TOL && best.is_none_or(|b| d < b.1) {
                        best = Some((j, d));
                    }
                }
                best.map(|b| b.0)
            };
            let Some(col) = entering else { return Ok(()) };

            let mut best = f64::INFINITY;
            for i in 0..self.rows {
                let a = self.at(i, col);
                if a > PIVOT_TOL {
                    best = best.min(self.at(i, rhs).max(0.0) / a);
                }
            }
            let slack = 1e-12 * (1.0 + best);
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, col);
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.at(i, rhs).max(0.0) / a;
                if ratio > best + slack {
                    continue;
                }
                leave = match leave {
                    Some((li, lr)) if self.lex_order(li, i, col).is_le() => Some((li, lr)),
                    _ => Some((i, ratio)),
                };
            }
            let Some((row, ratio)) = leave else { return Err(LpFailure::Unbounded) };

            if ratio <= 1e-14 {
                degenerate += 1;
                if degenerate >= DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            self.pivot(row, col);
            *iters += 1;
            if *iters > max_iter {
                return Err(LpFailure::IterationLimit);
            }
        }
    }
}

impl LinearProgram {
    pub fn solve(&self) -> Result<LpSolution, LpFailure> {
        let (m, n) = (self.rows, self.cols);
        let width = n + m + 1;
        let mut t = vec![0.0; (m + 1) * width];
        for i in 0..m {
            let sign = if self.b[i] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                t[i * width + j] = sign * self.a[i * n + j];
            }
            t[i * width + n + i] = 1.0;
            t[i * width + width - 1] = sign * self.b[i];
        }
        // Phase one costs: minimize the sum of artificials.
        for i in 0..m {
            for j in 0..n {
                t[m * width + j] -= t[i * width + j];
            }
            t[m * width + width - 1] -= t[i * width + width - 1];
        }
        let mut tab = Tableau { t, rows: m, width, basis: (n..n + m).collect(), identity_start: n };
        let max_iter = 50 * (m + n).max(10);
        let mut iters = 0;
        tab.optimize(n + m, max_iter, &mut iters)?;

        let infeasibility = -tab.at(tab.rows, tab.rhs_col());
        let scale = 1.0 + self.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if infeasibility > FEASIBILITY_TOL * scale {
            return Err(LpFailure::Infeasible { phase_one_objective: infeasibility });
        }

        // Drive artificials out of the basis; rows where that is impossible
        // are linearly dependent on the others and are dropped.
        let mut kept_rows: Vec<usize> = (0..m).collect();
        let mut i = 0;
        while i < tab.rows {
            if tab.basis[i] >= n {
                let candidate = (0..n)
                    .filter(|j| !tab.basis.contains(j))
                    .max_by(|&p, &q| tab.at(i, p).abs().total_cmp(&tab.at(i, q).abs()));
                match candidate {
                    Some(j) if tab.at(i, j).abs() > PIVOT_TOL => tab.pivot(i, j),
                    _ => {
                        tab.remove_row(i);
                        kept_rows.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }

        // Phase two reduced costs.
        let cost = tab.rows;
        let rhs = tab.rhs_col();
        for j in 0..width {
            tab.t[cost * width + j] = if j < n { self.c[j] } else { 0.0 };
        }
        for r in 0..tab.rows {
            let cb = self.c[tab.basis[r]];
            if cb != 0.0 {
                for j in 0..width {
                    tab.t[cost * width + j] -= cb * tab.t[r * width + j];
                }
            }
        }
        tab.optimize(n, max_iter, &mut iters)?;

        let mut x = vec![0.0; n];
        for r in 0..tab.rows {
            x[tab.basis[r]] = tab.at(r, rhs);
        }
        self.refine_basis(&tab.basis, &kept_rows, &mut x);
        let objective = x.iter().zip(&self.c).map(|(a, b)| a * b).sum();
        Ok(LpSolution { x, objective, iterations: iters })
    }

    /// Recomputes the basic variables from the original data.
    fn refine_basis(&self, basis: &[usize], kept_rows: &[usize], x: &mut [f64]) {
        let k = basis.len();
        let n = self.cols;
        let mut bm = vec![0.0; k * k];
        for (r, &row) in kept_rows.iter().enumerate() {
            for (c, &col) in basis.iter().enumerate() {
                bm[r * k + c] = self.a[row * n + col];
            }
        }
        let Ok(lu) = Lu::new(&bm, k, 1e-13) else { return };
        let rhs: Vec<f64> = kept_rows.iter().map(|&r| self.b[r]).collect();
        let xb = lu.solve(&rhs);
        if xb.iter().any(|v| !v.is_finite()) {
            return;
        }
        for (c, &col) in basis.iter().enumerate() {
            x[col] = xb[c];
        }
    }

    /// ‖A x − b‖∞.
    pub fn residual(&self, x: &[f64]) -> f64 {
        (0..self.rows)
            .map(|i| {
                let ax: f64 = (0..self.cols).map(|j| self.a[i * self.cols + j] * x[j]).sum();
                (ax - self.b[i]).abs()
            })
            .fold(0.0, f64::max)
    }
}
