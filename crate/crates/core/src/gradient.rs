//! Directional derivatives of discrete solutions with widened stencils.
//!
//! If `u = u^h + O(h^p)` and a difference formula of radius `r` has error
//! `O(r^β)` on smooth data, its error on `u^h` is `O(r^β + h^p / r)`, which
//! is balanced by `r = h^{p/(β+1)}`.

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{invalid, Error, Result};
use crate::geometry::{Manifold, ManifoldPoint, TangentVector};
use crate::linalg;
use crate::scheme::GridFunction;

/// Condition number above which the four-point system is abandoned.
pub const CONDITION_LIMIT: f64 = 1e8;
/// Bound on the stencil coefficients `a_i`.
pub const COEFFICIENT_BOUND: f64 = 10.0;
/// Accepted moment residual, in coordinates scaled by `r` along ν and `h`
/// across it.
pub const MOMENT_TOL: f64 = 1e-10;

/// `h^{p/(β+1)}` clamped to `[h, inj/4]`.
pub fn recommended_radius(p: f64, beta: f64, h: f64, manifold: &Manifold) -> f64 {
    let r = h.powf(p / (beta + 1.0));
    r.min(0.25 * manifold.injectivity_radius()).max(h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSpec {
    pub solution_order: f64,
    pub scheme_order: f64,
    pub radius: f64,
    /// Unit direction in the chart at the evaluation point.
    pub direction: Vec<f64>,
}

impl GradientSpec {
    /// Uses the recommended radius for fill distance `h`.
    pub fn new(p: f64, beta: f64, h: f64, manifold: &Manifold, direction: Vec<f64>) -> Result<Self> {
        if !(p > 0.0 && beta > 0.0 && h > 0.0) {
            return invalid("gradient orders and h must be positive");
        }
        Self::with_radius(p, beta, recommended_radius(p, beta, h, manifold), h, direction)
    }

    /// Uses an explicit radius, which must be at least `h`.
    pub fn with_radius(p: f64, beta: f64, radius: f64, h: f64, direction: Vec<f64>) -> Result<Self> {
        if !(radius >= h) {
            return invalid(format!("gradient radius {radius} below h = {h}"));
        }
        let len = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (len - 1.0).abs() > 1e-12 {
            return invalid(format!("direction has length {len}, expected 1"));
        }
        Ok(GradientSpec { solution_order: p, scheme_order: beta, radius, direction })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientStencil {
    pub center_index: usize,
    pub point_indices: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub radius: f64,
    pub moment_residual: f64,
}

impl GradientStencil {
    /// `(1/r) Σ a_i (u_i − u_0)`.
    pub fn apply(&self, u: &[f64]) -> f64 {
        let u0 = u[self.center_index];
        let s: f64 = self.point_indices.iter().zip(&self.coefficients).map(|(&i, a)| a * (u[i] - u0)).sum();
        s / self.radius
    }
}

/// Centered difference on the circle using the nodes nearest `x₀ ± r`.
/// The separation is measured through x₀, so any `r < 1/2` is usable.
pub fn centered_1d(u: &GridFunction, c: &PointCloud, x0_index: usize, r: f64) -> Result<f64> {
    let x0 = c.points[x0_index];
    let ManifoldPoint::Circle(t) = x0 else {
        return invalid("centered_1d needs a circle cloud");
    };
    if !(r > 0.0) {
        return invalid("centered_1d needs r > 0");
    }
    let (plus, _) = c.nearest(&ManifoldPoint::circle(t + r));
    let (minus, _) = c.nearest(&ManifoldPoint::circle(t - r));
    let sp = c.manifold.log_map(&x0, &c.points[plus])?.components[0];
    let sm = c.manifold.log_map(&x0, &c.points[minus])?.components[0];
    let sep = sp - sm;
    if !(sep > 0.0) {
        return Err(Error::GradientInfeasible(format!("no separated nodes around x₀ at r = {r}")));
    }
    Ok((u.values[plus] - u.values[minus]) / sep)
}

/// Monomials `X^p Y^q` matched by a gradient stencil of order `beta`: all
/// degrees `1..=β` except pure powers of the transverse coordinate, which
/// are `O(h^q)` small.
fn monomials(beta: f64) -> Vec<(i32, i32)> {
    let deg = (beta.floor() as i32).max(2);
    let mut out = Vec::new();
    for total in 1..=deg {
        for p in (0..=total).rev() {
            let q = total - p;
            if p == 0 && q >= 2 {
                continue;
            }
            out.push((p, q));
        }
    }
    out
}

fn moment_matrix(pts: &[[f64; 2]], mons: &[(i32, i32)]) -> (Vec<f64>, Vec<f64>) {
    let k = pts.len();
    let mut a = vec![0.0; mons.len() * k];
    for (row, &(p, q)) in mons.iter().enumerate() {
        for (i, v) in pts.iter().enumerate() {
            a[row * k + i] = v[0].powi(p) * v[1].powi(q);
        }
    }
    let b = mons.iter().map(|&m| if m == (1, 0) { 1.0 } else { 0.0 }).collect();
    (a, b)
}

fn residual(a: &[f64], rows: usize, k: usize, x: &[f64], b: &[f64]) -> f64 {
    linalg::mat_vec(a, rows, k, x).iter().zip(b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()))
}

/// Gradient stencil at x₀ from nodes given in normal coordinates about x₀
/// (the center itself may be included; it is ignored).
///
/// Points are picked from balls of radius `2h` around `(±r, ±h)` in the
/// frame with ν along the first axis. The four-point system is solved
/// directly when well conditioned; otherwise, and for `β > 2`, the
/// minimum-norm solution over every node in the balls is used.
pub fn synthesize_gradient_2d(
    center_index: usize,
    nu: [f64; 2],
    candidates: &[(usize, TangentVector)],
    r: f64,
    h: f64,
    beta: f64,
) -> Result<GradientStencil> {
    if !(r >= h && h > 0.0) {
        return invalid(format!("gradient radius {r} below h = {h}"));
    }
    if ((nu[0] * nu[0] + nu[1] * nu[1]).sqrt() - 1.0).abs() > 1e-12 {
        return invalid("gradient direction must be a unit vector");
    }
    let frame: Vec<(usize, [f64; 2])> = candidates
        .iter()
        .filter(|(i, v)| *i != center_index && v.components.len() == 2)
        .map(|(i, v)| {
            let (x, y) = (v.components[0], v.components[1]);
            (*i, [x * nu[0] + y * nu[1], -x * nu[1] + y * nu[0]])
        })
        .collect();
    let centers = [[r, h], [-r, h], [-r, -h], [r, -h]];
    let dist = |p: &[f64; 2], c: &[f64; 2]| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt();

    let mut chosen: Vec<usize> = Vec::with_capacity(4);
    for ctr in &centers {
        let best = frame
            .iter()
            .enumerate()
            .filter(|(slot, (_, p))| !chosen.contains(slot) && dist(p, ctr) <= 2.0 * h)
            .min_by(|a, b| dist(&a.1 .1, ctr).total_cmp(&dist(&b.1 .1, ctr)).then(a.1 .0.cmp(&b.1 .0)));
        match best {
            Some((slot, _)) => chosen.push(slot),
            None => {
                return Err(Error::GradientInfeasible(format!(
                    "no node within 2h of ({}, {}) at radius {r}",
                    ctr[0], ctr[1]
                )))
            }
        }
    }

    let scale = |p: &[f64; 2]| [p[0] / r, p[1] / h];
    let mons = monomials(beta);
    let finish = |slots: &[usize], coeffs: Vec<f64>, res: f64| GradientStencil {
        center_index,
        point_indices: slots.iter().map(|&s| frame[s].0).collect(),
        coefficients: coeffs,
        radius: r,
        moment_residual: res,
    };

    if mons.len() == 4 {
        let pts: Vec<[f64; 2]> = chosen.iter().map(|&s| scale(&frame[s].1)).collect();
        let (a, b) = moment_matrix(&pts, &mons);
        if linalg::condition_number(&a, 4) <= CONDITION_LIMIT {
            let x = linalg::solve(&a, 4, &b)?;
            let res = residual(&a, 4, 4, &x, &b);
            if res <= MOMENT_TOL && x.iter().all(|v| v.abs() <= COEFFICIENT_BOUND) {
                return Ok(finish(&chosen, x, res));
            }
        }
    }

    let pool: Vec<usize> =
        (0..frame.len()).filter(|&s| centers.iter().any(|ctr| dist(&frame[s].1, ctr) <= 2.0 * h)).collect();
    let pts: Vec<[f64; 2]> = pool.iter().map(|&s| scale(&frame[s].1)).collect();
    if pts.len() < mons.len() {
        return Err(Error::GradientInfeasible(format!(
            "{} candidate nodes for {} moment conditions",
            pts.len(),
            mons.len()
        )));
    }
    let (a, b) = moment_matrix(&pts, &mons);
    let x = linalg::least_norm(&a, mons.len(), pts.len(), &b)
        .map_err(|e| Error::GradientInfeasible(format!("moment system is rank deficient: {e}")))?;
    let res = residual(&a, mons.len(), pts.len(), &x, &b);
    if !(res <= MOMENT_TOL) {
        return Err(Error::GradientInfeasible(format!("moment residual {res:e}")));
    }
    if x.iter().any(|v| v.abs() > COEFFICIENT_BOUND) {
        return Err(Error::GradientInfeasible("coefficients exceed the O(1) bound".into()));
    }
    Ok(finish(&pool, x, res))
}

/// Derivative of `u` at node `x0_index` along `spec.direction`.
pub fn directional_derivative(u: &GridFunction, c: &PointCloud, x0_index: usize, spec: &GradientSpec) -> Result<f64> {
    let dim = c.manifold.dimension();
    if spec.direction.len() != dim {
        return invalid(format!("direction has {} components on a {dim}-manifold", spec.direction.len()));
    }
    if dim == 1 {
        return Ok(spec.direction[0] * centered_1d(u, c, x0_index, spec.radius)?);
    }
    let s = gradient_stencil_at(c, x0_index, spec)?;
    Ok(s.apply(&u.values))
}

/// The 2D stencil used by [`directional_derivative`].
pub fn gradient_stencil_at(c: &PointCloud, x0_index: usize, spec: &GradientSpec) -> Result<GradientStencil> {
    let h = c.fill_distance;
    let r = spec.radius;
    let reach = ((r + 2.0 * h).powi(2) + (3.0 * h).powi(2)).sqrt();
    let base = c.points[x0_index];
    let candidates = c
        .neighbors_within(x0_index, reach)
        .into_iter()
        .map(|j| Ok((j, c.manifold.log_map(&base, &c.points[j])?)))
        .collect::<Result<Vec<_>>>()?;
    let nu = [spec.direction[0], spec.direction[1]];
    synthesize_gradient_2d(x0_index, nu, &candidates, r, h, spec.scheme_order)
}
