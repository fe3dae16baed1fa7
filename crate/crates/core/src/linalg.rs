//! Small dense linear algebra used by stencil synthesis and gradient
//! recovery. Matrices are row-major `Vec<f64>`.

use crate::error::{invalid, Error, Result};

/// LU factorization with partial pivoting of a square matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn new(a: &[f64], n: usize, pivot_floor: f64) -> Result<Self> {
        if a.len() != n * n {
            return invalid(format!("expected {}x{} matrix, got {} entries", n, n, a.len()));
        }
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) =
                (k..n).map(|i| (i, lu[i * n + k].abs())).fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if pmax <= pivot_floor {
                return Err(Error::Singular { column: k, pivot: pmax });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let d = lu[k * n + k];
            for i in k + 1..n {
                let m = lu[i * n + k] / d;
                lu[i * n + k] = m;
                if m != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= m * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Lu { n, lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[j * n + i] * y[j]).sum();
            y[i] = (y[i] - s) / self.lu[i * n + i];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[j * n + i] * y[j]).sum();
            y[i] -= s;
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }

    /// Explicit inverse, column by column.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        inv
    }
}

pub fn solve(a: &[f64], n: usize, b: &[f64]) -> Result<Vec<f64>> {
    Ok(Lu::new(a, n, 0.0)?.solve(b))
}

fn norm_inf(a: &[f64], n: usize) -> f64 {
    (0..n).map(|i| a[i * n..(i + 1) * n].iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Infinity-norm condition number; `inf` for singular matrices.
pub fn condition_number(a: &[f64], n: usize) -> f64 {
    match Lu::new(a, n, 0.0) {
        Ok(lu) => norm_inf(a, n) * norm_inf(&lu.inverse(), n),
        Err(_) => f64::INFINITY,
    }
}

/// Minimum-norm solution of the underdetermined system `A x = b`, with `A`
/// of shape `m × k`, m ≤ k and full row rank.
pub fn least_norm(a: &[f64], m: usize, k: usize, b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != m * k || b.len() != m {
        return invalid("least_norm: dimension mismatch");
    }
    // A Aᵀ y = b, x = Aᵀ y. The normal matrix is small (m ≤ a dozen).
    let mut g = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            g[i * m + j] = (0..k).map(|t| a[i * k + t] * a[j * k + t]).sum();
        }
    }
    let y = Lu::new(&g, m, 1e-300)?.solve(b);
    Ok((0..k).map(|t| (0..m).map(|i| a[i * k + t] * y[i]).sum()).collect())
}

pub fn mat_vec(a: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows).map(|i| a[i * cols..(i + 1) * cols].iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a = [2.0, 1.0, 1.0, 3.0];
        let x = solve(&a, 2, &[3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-15 && (x[1] - 1.4).abs() < 1e-15);
    }

    #[test]
    fn transpose_solve_matches() {
        let a = [4.0, 1.0, 2.0, 0.5, 3.0, 1.0, 1.0, 2.0, 5.0];
        let lu = Lu::new(&a, 3, 0.0).unwrap();
        let b = [1.0, -2.0, 0.5];
        let x = lu.solve_transpose(&b);
        for j in 0..3 {
            let r: f64 = (0..3).map(|i| a[i * 3 + j] * x[i]).sum();
            assert!((r - b[j]).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_is_reported() {
        let a = [1.0, 2.0, 2.0, 4.0];
        assert!(matches!(Lu::new(&a, 2, 1e-14), Err(Error::Singular { .. })));
        assert!(condition_number(&a, 2).is_infinite() || condition_number(&a, 2) > 1e15);
    }

    #[test]
    fn least_norm_is_minimal() {
        // x + y = 2 has minimum-norm solution (1, 1).
        let x = least_norm(&[1.0, 1.0], 1, 2, &[2.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_condition_is_one() {
        assert_eq!(condition_number(&[1.0, 0.0, 0.0, 1.0], 2), 1.0);
    }
}
