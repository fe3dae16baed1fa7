//! Sparse operators, linear solvers and structural certificates.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Square matrix in compressed sparse row form. Columns within a row are
/// sorted and unique.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    pub n: usize,
    pub row_starts: Vec<usize>,
    pub col_indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseOperator {
    /// Builds from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(i, j, _)) = triplets.iter().find(|t| t.0 >= n || t.1 >= n) {
            return invalid(format!("entry ({i}, {j}) outside {n}x{n}"));
        }
        if triplets.iter().any(|t| !t.2.is_finite()) {
            return invalid("non-finite matrix entry");
        }
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut row_starts = vec![0; n + 1];
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(j);
                values.push(v);
                row_starts[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_starts[i + 1] += row_starts[i];
        }
        Ok(SparseOperator { n, row_starts, col_indices, values })
    }

    pub fn identity(n: usize) -> Self {
        SparseOperator { n, row_starts: (0..=n).collect(), col_indices: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_starts[i], self.row_starts[i + 1]);
        self.col_indices[a..b].iter().copied().zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.row_starts[i], self.row_starts[i + 1]);
        match self.col_indices[a..b].binary_search(&j) {
            Ok(k) => self.values[a + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for (j, v) in self.row(i) {
                d[i * n + j] = v;
            }
        }
        d
    }

    /// Coordinate text: a banner, `n n nnz`, then 1-based `row col value`.
    pub fn to_matrix_market(&self) -> String {
        let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(s, "{} {} {}", self.n, self.n, self.nnz());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                let _ = writeln!(s, "{} {} {}", i + 1, j + 1, v);
            }
        }
        s
    }

    pub fn from_matrix_market(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('%'));
        let header = lines.next().ok_or_else(|| Error::InvalidInput("missing size header".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::InvalidInput(format!("bad size header `{header}`"))))
            .collect::<Result<_>>()?;
        let [rows, cols, nnz] = dims[..] else {
            return invalid(format!("bad size header `{header}`"));
        };
        if rows != cols {
            return invalid("operator must be square");
        }
        let mut triplets = Vec::with_capacity(nnz);
        for line in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::InvalidInput(format!("bad entry `{line}`"));
            if f.len() != 3 {
                return Err(bad());
            }
            let i: usize = f[0].parse().map_err(|_| bad())?;
            let j: usize = f[1].parse().map_err(|_| bad())?;
            let v: f64 = f[2].parse().map_err(|_| bad())?;
            if i == 0 || j == 0 {
                return Err(bad());
            }
            triplets.push((i - 1, j - 1, v));
        }
        if triplets.len() != nnz {
            return invalid(format!("header promises {nnz} entries, found {}", triplets.len()));
        }
        Self::from_triplets(rows, triplets)
    }
}

pub fn vector_to_text(v: &[f64]) -> String {
    let mut s = String::new();
    for x in v {
        let _ = writeln!(s, "{x}");
    }
    s
}

pub fn vector_from_text(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| l.parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad value `{l}`"))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    /// Dense elimination up to [`DENSE_LIMIT`] unknowns, Krylov above.
    Auto,
    DirectDense,
    Krylov,
}

pub const DENSE_LIMIT: usize = 4096;
pub const DEFAULT_TOL: f64 = 1e-11;
/// Krylov subspace size between restarts.
pub const GMRES_RESTART: usize = 150;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub x: Vec<f64>,
    /// ‖A x − b‖∞ / (‖b‖∞ + 1).
    pub relative_residual: f64,
    pub method: SolveMethod,
    pub iterations: usize,
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Largest absolute row sum.
fn operator_norm_inf(op: &SparseOperator) -> f64 {
    (0..op.n).map(|i| op.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Residual level reachable in double precision, relative to `‖b‖∞ + 1`.
/// Tolerances below it are raised to it.
pub fn roundoff_floor(op_norm: f64, x: &[f64], b: &[f64]) -> f64 {
    64.0 * f64::EPSILON * op_norm * norm_inf(x) / (norm_inf(b) + 1.0)
}

pub fn relative_residual(op: &SparseOperator, x: &[f64], b: &[f64]) -> f64 {
    let ax = op.mul_vec(x);
    let r = ax.iter().zip(b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    r / (norm_inf(b) + 1.0)
}

/// Solves `op · x = rhs` to `‖op·x − rhs‖∞ / (‖rhs‖∞ + 1) ≤ tol`, or to the
/// round-off floor when `tol` is below it.
pub fn solve(op: &SparseOperator, rhs: &[f64], method: SolveMethod, tol: f64) -> Result<SolveOutcome> {
    if rhs.len() != op.n {
        return invalid(format!("rhs has length {}, operator is {}x{}", rhs.len(), op.n, op.n));
    }
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    let method = match method {
        SolveMethod::Auto if op.n <= DENSE_LIMIT => SolveMethod::DirectDense,
        SolveMethod::Auto => SolveMethod::Krylov,
        m => m,
    };
    match method {
        SolveMethod::DirectDense => {
            let lu = DenseLu::factor(op)?;
            let mut x = lu.solve(rhs);
            let mut res = relative_residual(op, &x, rhs);
            let mut refinements = 0;
            let op_norm = operator_norm_inf(op);
            let tol = tol.max(roundoff_floor(op_norm, &x, rhs));
            while res > tol && refinements < 3 {
                let ax = op.mul_vec(&x);
                let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
                let dx = lu.solve(&r);
                x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
                res = relative_residual(op, &x, rhs);
                refinements += 1;
            }
            if res > tol {
                return Err(Error::IterationLimit { iterations: refinements, residual: res });
            }
            Ok(SolveOutcome { x, relative_residual: res, method, iterations: refinements })
        }
        SolveMethod::Krylov => gmres(op, rhs, tol, GMRES_RESTART, 10 * op.n.max(1)),
        SolveMethod::Auto => unreachable!(),
    }
}

/// Dense LU with partial pivoting that exploits the sparsity of the input:
/// zero multipliers are skipped and updates touch only the nonzero columns
/// of the pivot row.
pub struct DenseLu {
    n: usize,
    a: Vec<f64>,
    perm: Vec<usize>,
}

pub const PIVOT_FLOOR: f64 = 1e-14;

impl DenseLu {
    pub fn factor(op: &SparseOperator) -> Result<Self> {
        let n = op.n;
        let mut a = op.to_dense();
        let mut perm: Vec<usize> = (0..n).collect();
        // Upper bound on the last row holding a nonzero in each column.
        let mut last_row: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for (j, _) in op.row(i) {
                last_row[j] = last_row[j].max(i);
            }
        }
        let mut nz = Vec::with_capacity(n);
        for k in 0..n {
            let bottom = last_row[k];
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for i in k + 1..=bottom {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best < PIVOT_FLOOR {
                return Err(Error::Singular { column: k, pivot: best });
            }
            if p != k {
                let (top, rest) = a.split_at_mut(p * n);
                top[k * n..(k + 1) * n].swap_with_slice(&mut rest[..n]);
                perm.swap(k, p);
                // The old row k now sits at p.
                for j in k + 1..n {
                    if a[p * n + j] != 0.0 && last_row[j] < p {
                        last_row[j] = p;
                    }
                }
            }
            nz.clear();
            nz.extend((k + 1..n).filter(|&j| a[k * n + j] != 0.0));
            let d = a[k * n + k];
            for i in k + 1..=bottom {
                let aik = a[i * n + k];
                if aik == 0.0 {
                    continue;
                }
                let m = aik / d;
                a[i * n + k] = m;
                let (upper, lower) = a.split_at_mut(i * n);
                let pivot_row = &upper[k * n..(k + 1) * n];
                let row = &mut lower[..n];
                for &j in &nz {
                    row[j] -= m * pivot_row[j];
                }
                for &j in &nz {
                    if last_row[j] < i {
                        last_row[j] = i;
                    }
                }
            }
        }
        Ok(DenseLu { n, a, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.a[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(l, y)| l * y).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.a[i * n + i + 1..(i + 1) * n];
            let s: f64 = row.iter().zip(&x[i + 1..]).map(|(u, y)| u * y).sum();
            x[i] = (x[i] - s) / self.a[i * n + i];
        }
        x
    }
}

/// Restarted GMRES with right Jacobi preconditioning. The Krylov residual
/// is the true residual, so convergence is checked on it directly.
pub fn gmres(op: &SparseOperator, b: &[f64], tol: f64, restart: usize, max_iter: usize) -> Result<SolveOutcome> {
    let n = op.n;
    let inv_diag: Vec<f64> = op.diagonal().iter().map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let target = tol * (norm_inf(b) + 1.0);
    let op_norm = operator_norm_inf(op);
    let mut x = vec![0.0; n];
    let mut iterations = 0;
    let m = restart.max(1).min(n.max(1));
    let mut v: Vec<Vec<f64>> = vec![vec![0.0; n]; m + 1];
    let mut hess = vec![vec![0.0; m]; m + 1];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];

    loop {
        let ax = op.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let res_inf = norm_inf(&r);
        let target = target.max(roundoff_floor(op_norm, &x, b) * (norm_inf(b) + 1.0));
        if res_inf <= target {
            return Ok(SolveOutcome {
                x,
                relative_residual: res_inf / (norm_inf(b) + 1.0),
                method: SolveMethod::Krylov,
                iterations,
            });
        }
        if iterations >= max_iter {
            return Err(Error::IterationLimit { iterations, residual: res_inf / (norm_inf(b) + 1.0) });
        }
        let beta = r.iter().map(|t| t * t).sum::<f64>().sqrt();
        v[0].iter_mut().zip(&r).for_each(|(a, t)| *a = t / beta);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut k_used = 0;
        for k in 0..m {
            for i in 0..n {
                z[i] = inv_diag[i] * v[k][i];
            }
            op.mul_vec_into(&z, &mut w);
            // Modified Gram-Schmidt.
            for i in 0..=k {
                let hik: f64 = w.iter().zip(&v[i]).map(|(a, c)| a * c).sum();
                hess[i][k] = hik;
                w.iter_mut().zip(&v[i]).for_each(|(a, c)| *a -= hik * c);
            }
            let hn = w.iter().map(|t| t * t).sum::<f64>().sqrt();
            hess[k + 1][k] = hn;
            if hn > 0.0 {
                v[k + 1].iter_mut().zip(&w).for_each(|(a, c)| *a = c / hn);
            }
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let denom = hess[k][k].hypot(hess[k + 1][k]);
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = hess[k][k] / denom;
                sn[k] = hess[k + 1][k] / denom;
            }
            hess[k][k] = cs[k] * hess[k][k] + sn[k] * hess[k + 1][k];
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            iterations += 1;
            k_used = k + 1;
            // ‖r‖∞ ≤ ‖r‖₂, so this test is conservative.
            if g[k + 1].abs() <= 0.5 * target || hn == 0.0 || iterations >= max_iter {
                break;
            }
        }
        // A zero pivot means breakdown on a singular operator; keep the
        // directions before it and report stagnation if none remain.
        if let Some(bad) = (0..k_used).find(|&i| hess[i][i].abs() <= f64::MIN_POSITIVE) {
            k_used = bad;
        }
        if k_used == 0 {
            return Err(Error::IterationLimit { iterations, residual: res_inf / (norm_inf(b) + 1.0) });
        }
        // Back substitution for the least-squares coefficients.
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| hess[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / hess[i][i];
        }
        let mut update = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            update.iter_mut().zip(&v[j]).for_each(|(u, c)| *u += yj * c);
        }
        for i in 0..n {
            x[i] += inv_diag[i] * update[i];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MMatrixCertificate {
    pub is_m_matrix: bool,
    pub min_diag: f64,
    pub max_offdiag: f64,
    pub min_rowsum: f64,
}

/// Sign pattern and properness check: positive diagonal, off-diagonals
/// ≤ 1e−12, row sums ≥ `proper_floor` − 1e−12.
pub fn certify_m_matrix(op: &SparseOperator, proper_floor: f64) -> MMatrixCertificate {
    let mut min_diag = f64::INFINITY;
    let mut max_offdiag = f64::NEG_INFINITY;
    let mut min_rowsum = f64::INFINITY;
    for i in 0..op.n {
        let mut diag = 0.0;
        let mut sum = 0.0;
        for (j, v) in op.row(i) {
            if j == i {
                diag = v;
            } else {
                max_offdiag = max_offdiag.max(v);
            }
            sum += v;
        }
        min_diag = min_diag.min(diag);
        min_rowsum = min_rowsum.min(sum);
    }
    if max_offdiag == f64::NEG_INFINITY {
        max_offdiag = 0.0;
    }
    let is_m_matrix = min_diag > 0.0 && max_offdiag <= 1e-12 && min_rowsum >= proper_floor - 1e-12;
    MMatrixCertificate { is_m_matrix, min_diag, max_offdiag, min_rowsum }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random strictly diagonally dominant M-matrix with a few long-range
    /// couplings.
    fn random_m_matrix(n: usize, seed: u64) -> SparseOperator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            let mut off = 0.0;
            for _ in 0..4 {
                let j = rng.gen_range(0..n);
                if j != i {
                    let v = -rng.gen_range(0.1..2.0);
                    off += v;
                    t.push((i, j, v));
                }
            }
            t.push((i, i, -off + rng.gen_range(0.01..0.5)));
        }
        SparseOperator::from_triplets(n, t).unwrap()
    }

    fn naive_dense_solve(op: &SparseOperator, b: &[f64]) -> Vec<f64> {
        // Textbook Gaussian elimination with partial pivoting, no shortcuts.
        let n = op.n;
        let mut a = op.to_dense();
        let mut x = b.to_vec();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs())).unwrap();
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            x.swap(k, p);
            for i in k + 1..n {
                let m = a[i * n + k] / a[k * n + k];
                for j in k..n {
                    a[i * n + j] -= m * a[k * n + j];
                }
                x[i] -= m * x[k];
            }
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i * n + j] * x[j]).sum();
            x[i] = (x[i] - s) / a[i * n + i];
        }
        x
    }

    #[test]
    fn triplets_merge_duplicates() {
        let op = SparseOperator::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, -1.0), (1, 1, 4.0)]).unwrap();
        assert_eq!(op.nnz(), 3);
        assert_eq!(op.get(0, 0), 3.0);
        assert_eq!(op.get(0, 1), 0.0);
        assert!(SparseOperator::from_triplets(2, vec![(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn identity_returns_rhs() {
        let b = vec![1.5, -2.0, 3.25, 0.0];
        for m in [SolveMethod::DirectDense, SolveMethod::Krylov, SolveMethod::Auto] {
            let s = solve(&SparseOperator::identity(4), &b, m, DEFAULT_TOL).unwrap();
            assert!(s.x.iter().zip(&b).all(|(p, q)| (p - q).abs() <= 1e-14 * q.abs()));
            if m != SolveMethod::Krylov {
                assert_eq!(s.x, b);
            }
        }
    }

    #[test]
    fn dense_matches_textbook_elimination() {
        let op = random_m_matrix(120, 1);
        let b: Vec<f64> = (0..120).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = solve(&op, &b, SolveMethod::DirectDense, DEFAULT_TOL).unwrap().x;
        let y = naive_dense_solve(&op, &b);
        assert!(x.iter().zip(&y).all(|(p, q)| (p - q).abs() < 1e-10));
    }

    #[test]
    fn krylov_converges_on_dominant_m_matrix() {
        for seed in 0..5 {
            let op = random_m_matrix(500, seed);
            let b: Vec<f64> = (0..500).map(|i| 1.0 + (i % 7) as f64).collect();
            let s = solve(&op, &b, SolveMethod::Krylov, DEFAULT_TOL).unwrap();
            assert!(s.relative_residual <= DEFAULT_TOL);
            let d = solve(&op, &b, SolveMethod::DirectDense, DEFAULT_TOL).unwrap();
            let diff = s.x.iter().zip(&d.x).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            assert!(diff < 1e-8, "seed {seed}: {diff}");
        }
    }

    #[test]
    fn singular_dense_is_reported() {
        let op = SparseOperator::from_triplets(2, vec![(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 1.0)]).unwrap();
        assert!(matches!(solve(&op, &[0.0, 0.0], SolveMethod::DirectDense, 1e-11), Err(Error::Singular { .. })));
    }

    #[test]
    fn krylov_iteration_limit_is_reported() {
        let op = SparseOperator::from_triplets(2, vec![(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 1.0)]).unwrap();
        let r = gmres(&op, &[1.0, 0.0], 1e-11, 2, 20);
        assert!(matches!(r, Err(Error::IterationLimit { .. })));
    }

    #[test]
    fn certificates() {
        let id = certify_m_matrix(&SparseOperator::identity(3), 1.0);
        assert!(id.is_m_matrix);
        let bad = SparseOperator::from_triplets(2, vec![(0, 0, 2.0), (0, 1, 0.5), (1, 1, 1.0)]).unwrap();
        assert!(!certify_m_matrix(&bad, 0.0).is_m_matrix);
        let op = random_m_matrix(50, 3);
        let c = certify_m_matrix(&op, 0.0);
        assert!(c.is_m_matrix && c.min_rowsum > 0.0);
    }

    #[test]
    fn monotone_inverse() {
        let op = random_m_matrix(200, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0..1.0)).collect();
        let x = solve(&op, &b, SolveMethod::Auto, DEFAULT_TOL).unwrap().x;
        assert!(x.iter().all(|&v| v >= -1e-10));
    }

    #[test]
    fn matrix_market_roundtrip() {
        let op = random_m_matrix(30, 2);
        let text = op.to_matrix_market();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real general\n30 30 "));
        assert_eq!(SparseOperator::from_matrix_market(&text).unwrap(), op);
        let v = vec![1.0, -0.5, 1e-300];
        assert_eq!(vector_from_text(&vector_to_text(&v)).unwrap(), v);
        assert!(SparseOperator::from_matrix_market("2 2 1\n0 1 3.0\n").is_err());
        assert!(SparseOperator::from_matrix_market("2 2 2\n1 1 3.0\n").is_err());
    }
}
