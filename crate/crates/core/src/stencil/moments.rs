//! Consistency rows for the divergence-form ansatz
//!
//! ```text
//! L u(x0) = -Σ_k Σ_i Σ_j c_k(i,j) a_k(x_j) u(x_i)
//! ```
//!
//! Expanding `a_k(x_j) u(x_i)` to second order about `x0` and matching
//! against `-Σ_k ∂(a_k ∂u)` gives one block of rows per component `k`.
//! `h_i` is the (scaled) offset of neighbor `i`, `h_j` that of flux point `j`,
//! indices `p, s` run over coordinates.
//!
//! | row                        | count      | target                                |
//! |----------------------------|------------|---------------------------------------|
//! | Σ_i c(i,j) for each j ∈ J  | \|J\|      | 0                                     |
//! | Σ c h_ip                   | d          | 0                                     |
//! | ½ Σ c h_ip²                | d          | trace: 1; (q,q): [p=q]; (1,2): 0      |
//! | Σ c h_i1 h_i2  (2D only)   | 1          | (1,2): 2; otherwise 0                 |
//! | Σ c h_js h_ip              | d²         | trace: [s=p]; (q,q): [s=p=q]; (1,2): [s≠p] |
//!
//! The per-flux-point sums imply the zeroth, `h_j` and `h_j²` rows of the
//! plain expansion and make the stencil annihilate constants exactly for
//! any coefficient field. The `(1,2)` component approximates
//! `∂1(a12 ∂2u) + ∂2(a12 ∂1u)`, so symmetric tensors need three components.
//! The trace component approximates `Σ_p ∂p(a ∂p u)` for isotropic fields.

// Loops follow the index names of the table above.
#![allow(clippy::needless_range_loop)]

/// One term of the operator sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    /// `Σ_p ∂p(a ∂p u)` with scalar `a`.
    Trace,
    /// `∂p(a_pq ∂q u)`, plus its transpose when `p ≠ q`; stored with `p ≤ q`.
    Entry(usize, usize),
}

/// Rows per component for dimension `d` with `flux` flux points.
pub fn rows_per_component(d: usize, flux: usize) -> usize {
    flux + d + d * (d + 1) / 2 + d * d
}

fn second_moment_target(k: Component, p: usize) -> f64 {
    match k {
        Component::Trace => 1.0,
        Component::Entry(a, b) => (a == p && b == p) as u8 as f64,
    }
}

fn cross_moment_target(k: Component) -> f64 {
    match k {
        Component::Entry(0, 1) => 2.0,
        _ => 0.0,
    }
}

fn mixed_target(k: Component, s: usize, p: usize) -> f64 {
    match k {
        Component::Trace => (s == p) as u8 as f64,
        Component::Entry(a, b) if a == b => (s == a && p == a) as u8 as f64,
        Component::Entry(_, _) => (s != p) as u8 as f64,
    }
}

/// Right-hand sides of the block for component `k`.
pub fn block(k: Component, d: usize, flux: usize) -> Vec<f64> {
    let mut t = vec![0.0; flux];
    t.extend(std::iter::repeat_n(0.0, d));
    for p in 0..d {
        t.push(second_moment_target(k, p));
    }
    if d == 2 {
        t.push(cross_moment_target(k));
    }
    for s in 0..d {
        for p in 0..d {
            t.push(mixed_target(k, s, p));
        }
    }
    t
}

/// Writes the column of `c(i, j)` into `out` (length `rows_per_component`).
/// `hi` and `hj` have length `d`; `j` is the flux slot.
pub fn column(hi: &[f64], hj: &[f64], j: usize, flux: usize, out: &mut [f64]) {
    let d = hi.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    out[j] = 1.0;
    let mut r = flux;
    for p in 0..d {
        out[r] = hi[p];
        r += 1;
    }
    for p in 0..d {
        out[r] = 0.5 * hi[p] * hi[p];
        r += 1;
    }
    if d == 2 {
        out[r] = hi[0] * hi[1];
        r += 1;
    }
    for s in 0..d {
        for p in 0..d {
            out[r] = hj[s] * hi[p];
            r += 1;
        }
    }
}
