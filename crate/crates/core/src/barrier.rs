//! Barrier right-hand side around the pinned point and the discrete
//! barrier solve.
//!
//! Around x₀ the manifold splits into the inner cap `b` (d < h^γ), the
//! shell `S` (h^γ ≤ d ≤ 2h^γ) and the rest `B`. The right-hand side is a
//! negative constant on `b`, a positive constant on `B` and a cosine blend
//! on `S`, tuned so that its integral vanishes and it is C¹.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{invalid, Result};
use crate::geometry::{Manifold, ManifoldKind, ManifoldPoint, TangentVector};
use crate::scheme::GridFunction;
use crate::solver::{self, SolveMethod, SparseOperator};
use crate::stencil::Stencil;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Inner,
    Shell,
    Outer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapRegions {
    pub gamma: f64,
    pub h: f64,
    pub radius_inner: f64,
    pub radius_outer: f64,
    pub classification: Vec<Region>,
    pub volume_inner: f64,
    pub volume_shell: f64,
    pub volume_outer: f64,
}

/// Volume of the closed geodesic ball of radius `t`.
pub fn ball_volume(m: &Manifold, t: f64) -> f64 {
    match m.kind {
        ManifoldKind::Circle1 => (2.0 * t).min(1.0),
        ManifoldKind::FlatTorus2 => PI * t * t,
        ManifoldKind::Sphere2 => 2.0 * PI * (1.0 - t.cos()),
    }
}

/// Classifies nodes by geodesic distance to x₀ and records the region
/// volumes in closed form.
pub fn compute_regions(c: &PointCloud, gamma: f64, h: f64) -> Result<CapRegions> {
    if !(gamma > 0.0 && h > 0.0) {
        return invalid("cap regions need γ > 0 and h > 0");
    }
    let inner = h.powf(gamma);
    let outer = 2.0 * inner;
    let limit = c.manifold.injectivity_radius();
    if outer > limit {
        return invalid(format!("cap radius {outer} exceeds the injectivity radius {limit}"));
    }
    let classification = (0..c.len())
        .map(|i| {
            let d = c.distance_to_x0(i);
            if d < inner {
                Region::Inner
            } else if d <= outer {
                Region::Shell
            } else {
                Region::Outer
            }
        })
        .collect();
    let vb = ball_volume(&c.manifold, inner);
    let vbs = ball_volume(&c.manifold, outer);
    Ok(CapRegions {
        gamma,
        h,
        radius_inner: inner,
        radius_outer: outer,
        classification,
        volume_inner: vb,
        volume_shell: vbs - vb,
        volume_outer: (c.manifold.total_volume() - vbs).max(0.0),
    })
}

const RADIAL_INTERVALS: usize = 256;
const ANGULAR_SAMPLES: usize = 64;

/// `∫_S cos(π(d(x,x₀) − h^γ)/h^γ) dx`. Exact on the circle; on surfaces a
/// ring rule (Simpson in the radius, uniform in the angle) over points
/// placed with the exponential map.
pub fn q_integral(regions: &CapRegions, c: &PointCloud) -> Result<f64> {
    let a = regions.radius_inner;
    let m = &c.manifold;
    if m.kind == ManifoldKind::Circle1 {
        // Two arcs, each carrying a full period of the cosine.
        return Ok(0.0);
    }
    let x0 = *c.x0();
    let jacobian = |t: f64| match m.kind {
        ManifoldKind::Sphere2 => t.sin(),
        _ => t,
    };
    let dt = a / RADIAL_INTERVALS as f64;
    let dth = 2.0 * PI / ANGULAR_SAMPLES as f64;
    let mut total = 0.0;
    for k in 0..=RADIAL_INTERVALS {
        let t = a + k as f64 * dt;
        let w = if k == 0 || k == RADIAL_INTERVALS {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let mut ring = 0.0;
        for l in 0..ANGULAR_SAMPLES {
            let th = l as f64 * dth;
            let p = m.exp_map(&TangentVector { base: x0, components: vec![t * th.cos(), t * th.sin()] })?;
            let d = m.geodesic_distance(&x0, &p)?;
            ring += (PI * (d - a) / a).cos();
        }
        total += w * ring * dth * jacobian(t);
    }
    Ok(total * dt / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    pub k0: f64,
    pub k1: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub h: f64,
    pub q: f64,
    pub a: f64,
    pub volume_inner: f64,
    pub volume_shell: f64,
    pub volume_outer: f64,
}

/// `A^h = |B|(2|b| + |S| + Q) / (2|B| + |S| − Q)`.
pub fn a_coefficient(vb: f64, vs: f64, vbig: f64, q: f64) -> f64 {
    vbig * (2.0 * vb + vs + q) / (2.0 * vbig + vs - q)
}

impl BarrierParams {
    pub fn new(regions: &CapRegions, q: f64, alpha: f64, k0: f64, k1: f64) -> Result<Self> {
        if !(k0 > 0.0 && k1 > 0.0) {
            return invalid("barrier constants must be positive");
        }
        let a = a_coefficient(regions.volume_inner, regions.volume_shell, regions.volume_outer, q);
        Ok(BarrierParams {
            k0,
            k1,
            alpha,
            gamma: regions.gamma,
            h: regions.h,
            q,
            a,
            volume_inner: regions.volume_inner,
            volume_shell: regions.volume_shell,
            volume_outer: regions.volume_outer,
        })
    }

    fn scale(&self) -> f64 {
        self.k1 * self.h.powf(self.alpha)
    }

    /// Value on the inner cap, `-K1 h^α / A^h`.
    pub fn inner_value(&self) -> f64 {
        -self.scale() / self.a
    }

    /// Value away from the cap, `K1 h^α / |B|`.
    pub fn outer_value(&self) -> f64 {
        self.scale() / self.volume_outer
    }

    /// Sup of |ψ'| over the shell.
    pub fn max_slope(&self) -> f64 {
        let hg = self.h.powf(self.gamma);
        PI * self.scale() / (2.0 * hg) * (1.0 / self.a + 1.0 / self.volume_outer)
    }
}

/// Cosine blend on the shell.
pub fn psi_cutoff(t: f64, p: &BarrierParams) -> Result<f64> {
    let hg = p.h.powf(p.gamma);
    let slack = 1e-12 * hg;
    if t < hg - slack || t > 2.0 * hg + slack {
        return invalid(format!("ψ evaluated at {t}, outside the shell [{hg}, {}]", 2.0 * hg));
    }
    let k = p.scale() / 2.0;
    let (ia, ib) = (1.0 / p.a, 1.0 / p.volume_outer);
    Ok(-k * (ia + ib) * (PI * (t - hg) / hg).cos() + k * (ib - ia))
}

/// Piecewise right-hand side sampled at the nodes.
pub fn barrier_rhs(regions: &CapRegions, p: &BarrierParams, c: &PointCloud) -> Result<GridFunction> {
    if !(p.volume_outer > 0.0) || !(p.a > 0.0) {
        return invalid("degenerate cap: the outer region has no volume");
    }
    let values = regions
        .classification
        .iter()
        .enumerate()
        .map(|(i, r)| match r {
            Region::Outer => Ok(p.outer_value()),
            Region::Inner => Ok(p.inner_value()),
            Region::Shell => psi_cutoff(c.distance_to_x0(i).max(regions.radius_inner), p),
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(GridFunction { values })
}

/// Equal-weight quadrature `Σ f(x_i) · |M|/n`.
pub fn check_mean_zero(f: &GridFunction, c: &PointCloud) -> Result<f64> {
    let w = c.manifold.quadrature_weight(c.len())?;
    Ok(f.values.iter().sum::<f64>() * w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierDiagnostics {
    pub sup_norm: f64,
    pub lipschitz_estimate: f64,
}

/// Solves `(L^h + h^α) φ = f^h` and shifts so that `φ(x₀) = K0 h^γ`.
#[allow(clippy::too_many_arguments)]
pub fn solve_barrier(
    f: &GridFunction,
    stencils: &[Stencil],
    alpha: f64,
    c: &PointCloud,
    k0: f64,
    gamma: f64,
    h: f64,
    method: SolveMethod,
) -> Result<(GridFunction, BarrierDiagnostics)> {
    let n = c.len();
    if stencils.len() != n || f.values.len() != n {
        return invalid("barrier solve needs one stencil and one rhs value per node");
    }
    let eps = h.powf(alpha);
    let mut triplets = Vec::new();
    for (i, s) in stencils.iter().enumerate() {
        for (&j, &w) in s.neighbor_indices.iter().zip(&s.coefficients) {
            triplets.push((i, j, w));
        }
        triplets.push((i, i, eps));
    }
    let op = SparseOperator::from_triplets(n, triplets)?;
    let sol = solver::solve(&op, &f.values, method, solver::DEFAULT_TOL)?;
    let shift = k0 * h.powf(gamma) - sol.x[c.x0_index];
    let phi = GridFunction { values: sol.x.iter().map(|v| v + shift).collect() };
    let diag = BarrierDiagnostics { sup_norm: phi.sup_norm(), lipschitz_estimate: lipschitz_estimate(&phi, c) };
    Ok((phi, diag))
}

/// Max difference quotient over node pairs closer than three fill distances.
pub fn lipschitz_estimate(u: &GridFunction, c: &PointCloud) -> f64 {
    let r = 3.0 * c.fill_distance;
    let mut best = 0.0f64;
    for i in 0..c.len() {
        for j in c.neighbors_within(i, r).into_iter().skip(1) {
            let d = c.distance(i, j);
            if d > 0.0 {
                best = best.max((u.values[i] - u.values[j]).abs() / d);
            }
        }
    }
    best
}

/// Everything the harness reports about the barrier at one resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierReport {
    pub h: f64,
    pub gamma: f64,
    pub radius_inner: f64,
    pub radius_outer: f64,
    pub volume_inner: f64,
    pub volume_shell: f64,
    pub volume_outer: f64,
    pub q: f64,
    pub a_h: f64,
    /// `A^h / h^{2γ}`.
    pub a_over_h2g: f64,
    /// Relative gap when `A^h` is recomputed from the volumes.
    pub identity_gap: f64,
    /// `|ψ(h^γ) − f_b|` and `|ψ(2h^γ) − f_B|`.
    pub inner_gap: f64,
    pub outer_gap: f64,
    /// One-sided difference quotients of ψ at the shell ends, relative to
    /// the largest slope of ψ.
    pub inner_slope: f64,
    pub outer_slope: f64,
    pub mean: f64,
    /// `10 h ‖f^h‖∞`.
    pub mean_bound: f64,
    pub f_sup: f64,
    pub f_lipschitz: f64,
    pub phi_sup: f64,
    pub phi_lipschitz: f64,
}

/// Builds `f^h` with `K0 = K1 = 1`, runs the endpoint, identity and mean
/// checks, and solves for the barrier.
pub fn barrier_diagnostics(
    c: &PointCloud,
    stencils: &[Stencil],
    alpha: f64,
    gamma: f64,
    h: f64,
    method: SolveMethod,
) -> Result<BarrierReport> {
    let regions = compute_regions(c, gamma, h)?;
    let q = q_integral(&regions, c)?;
    let p = BarrierParams::new(&regions, q, alpha, 1.0, 1.0)?;
    let f = barrier_rhs(&regions, &p, c)?;
    let (a, b) = (regions.radius_inner, regions.radius_outer);
    let delta = 1e-6 * a;
    let slope = p.max_slope();
    let again = a_coefficient(p.volume_inner, p.volume_shell, p.volume_outer, p.q);
    let mean = check_mean_zero(&f, c)?;
    let (_, diag) = solve_barrier(&f, stencils, alpha, c, 1.0, gamma, h, method)?;
    Ok(BarrierReport {
        h,
        gamma,
        radius_inner: a,
        radius_outer: b,
        volume_inner: p.volume_inner,
        volume_shell: p.volume_shell,
        volume_outer: p.volume_outer,
        q,
        a_h: p.a,
        a_over_h2g: p.a / h.powf(2.0 * gamma),
        identity_gap: (again - p.a).abs() / p.a,
        inner_gap: (psi_cutoff(a, &p)? - p.inner_value()).abs(),
        outer_gap: (psi_cutoff(b, &p)? - p.outer_value()).abs(),
        inner_slope: ((psi_cutoff(a + delta, &p)? - psi_cutoff(a, &p)?) / delta).abs() / slope,
        outer_slope: ((psi_cutoff(b, &p)? - psi_cutoff(b - delta, &p)?) / delta).abs() / slope,
        mean,
        mean_bound: 10.0 * h * f.sup_norm(),
        f_sup: f.sup_norm(),
        f_lipschitz: lipschitz_estimate(&f, c),
        phi_sup: diag.sup_norm,
        phi_lipschitz: diag.lipschitz_estimate,
    })
}

/// Exact sample point on a shell radius, for continuity checks on surfaces.
pub fn shell_point(c: &PointCloud, t: f64) -> Result<ManifoldPoint> {
    let dim = c.manifold.dimension();
    let mut comps = vec![0.0; dim];
    comps[0] = t;
    c.manifold.exp_map(&TangentVector { base: *c.x0(), components: comps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::generate_cloud;
    use crate::stencil::closed_form_wide_1d;

    #[test]
    fn circle_region_volumes() {
        let c = generate_cloud(Manifold::circle(), 64, 0).unwrap();
        let r = compute_regions(&c, 1.0 / 3.0, 1.0 / 64.0).unwrap();
        assert!((r.radius_inner - 0.25).abs() < 1e-12);
        assert!((r.volume_inner - 0.5).abs() < 1e-12);
        assert!((r.volume_shell - 0.5).abs() < 1e-12);
        assert!(r.volume_outer.abs() < 1e-12);
        let p = BarrierParams::new(&r, 0.0, 1.0, 1.0, 1.0).unwrap();
        assert!(barrier_rhs(&r, &p, &c).is_err());

        let c = generate_cloud(Manifold::circle(), 4096, 0).unwrap();
        let r = compute_regions(&c, 1.0 / 3.0, 1.0 / 4096.0).unwrap();
        assert!((r.volume_inner - 0.125).abs() < 1e-12);
        assert!((r.volume_shell - 0.125).abs() < 1e-12);
        assert!((r.volume_outer - 0.75).abs() < 1e-12);
    }

    #[test]
    fn oversized_cap_is_rejected() {
        let c = generate_cloud(Manifold::circle(), 16, 0).unwrap();
        assert!(compute_regions(&c, 0.2, 1.0 / 16.0).is_err());
    }

    #[test]
    fn sphere_cap_volume() {
        let c = generate_cloud(Manifold::sphere(), 1000, 0).unwrap();
        let r = compute_regions(&c, 1.0 / 3.0, 0.01).unwrap();
        let t = 0.01f64.powf(1.0 / 3.0);
        assert!((r.volume_inner - 2.0 * PI * (1.0 - t.cos())).abs() < 1e-12);
        let total = r.volume_inner + r.volume_shell + r.volume_outer;
        assert!((total - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn flat_annulus_q_matches_radial_oracle() {
        let c = generate_cloud(Manifold::torus(), 1024, 0).unwrap();
        let r = compute_regions(&c, 0.5, 0.01).unwrap();
        let q = q_integral(&r, &c).unwrap();
        // Independent midpoint rule on 10⁶ radial cells.
        let a = r.radius_inner;
        let m = 1_000_000;
        let dt = a / m as f64;
        let oracle: f64 = (0..m)
            .map(|k| {
                let t = a + (k as f64 + 0.5) * dt;
                2.0 * PI * t * (PI * (t - a) / a).cos() * dt
            })
            .sum();
        assert!((q - oracle).abs() <= 1e-9 * a * a, "{q} vs {oracle}");
        assert!(q.abs() <= r.volume_shell);
    }

    #[test]
    fn circle_q_is_zero() {
        let c = generate_cloud(Manifold::circle(), 4096, 0).unwrap();
        let r = compute_regions(&c, 1.0 / 3.0, 1.0 / 4096.0).unwrap();
        assert_eq!(q_integral(&r, &c).unwrap(), 0.0);
    }

    fn sphere_params() -> (PointCloud, CapRegions, BarrierParams) {
        let c = generate_cloud(Manifold::sphere(), 2000, 0).unwrap();
        let h = c.fill_distance;
        let r = compute_regions(&c, 1.0 / 3.0, h).unwrap();
        let q = q_integral(&r, &c).unwrap();
        let p = BarrierParams::new(&r, q, 1.0, 1.0, 1.0).unwrap();
        (c, r, p)
    }

    #[test]
    fn psi_endpoints_and_flat_derivative() {
        let (_, r, p) = sphere_params();
        let (a, b) = (r.radius_inner, r.radius_outer);
        assert!((psi_cutoff(a, &p).unwrap() - p.inner_value()).abs() < 1e-10);
        assert!((psi_cutoff(b, &p).unwrap() - p.outer_value()).abs() < 1e-10);
        let dl = (psi_cutoff(a + 1e-7, &p).unwrap() - psi_cutoff(a, &p).unwrap()) / 1e-7;
        let dr = (psi_cutoff(b, &p).unwrap() - psi_cutoff(b - 1e-7, &p).unwrap()) / 1e-7;
        assert!(dl.abs() <= 1e-5 * p.max_slope());
        assert!(dr.abs() <= 1e-5 * p.max_slope());
        assert!(psi_cutoff(0.5 * a, &p).is_err());
    }

    #[test]
    fn a_identity_and_exact_mean_zero() {
        let (_, r, p) = sphere_params();
        let again = a_coefficient(p.volume_inner, p.volume_shell, p.volume_outer, p.q);
        assert!((again - p.a).abs() <= 1e-12 * p.a);
        assert!(p.q.abs() <= r.volume_shell);
        // Exact integral of the piecewise function, using the same Q.
        let exact = p.outer_value() * p.volume_outer + p.inner_value() * p.volume_inner
            - p.scale() / 2.0 * (1.0 / p.a + 1.0 / p.volume_outer) * p.q
            + p.scale() / 2.0 * (1.0 / p.volume_outer - 1.0 / p.a) * p.volume_shell;
        assert!(exact.abs() < 1e-14);
    }

    #[test]
    fn mean_zero_on_circle() {
        let c = generate_cloud(Manifold::circle(), 4096, 0).unwrap();
        let h = 1.0 / 4096.0;
        let r = compute_regions(&c, 1.0 / 3.0, h).unwrap();
        let p = BarrierParams::new(&r, q_integral(&r, &c).unwrap(), 1.0, 1.0, 1.0).unwrap();
        let f = barrier_rhs(&r, &p, &c).unwrap();
        let outer: Vec<f64> =
            r.classification.iter().zip(&f.values).filter(|(k, _)| **k == Region::Outer).map(|(_, v)| *v).collect();
        assert!(outer.windows(2).all(|w| w[0] == w[1]));
        let integral = check_mean_zero(&f, &c).unwrap();
        assert!(integral.abs() <= 10.0 * h * f.sup_norm());
    }

    #[test]
    fn quadrature_of_constants() {
        let c = generate_cloud(Manifold::sphere(), 500, 0).unwrap();
        let zero = GridFunction { values: vec![0.0; 500] };
        assert_eq!(check_mean_zero(&zero, &c).unwrap(), 0.0);
        let one = GridFunction { values: vec![1.0; 500] };
        assert!((check_mean_zero(&one, &c).unwrap() - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn zero_rhs_gives_constant_barrier() {
        let n = 256;
        let c = generate_cloud(Manifold::circle(), n, 0).unwrap();
        let s = closed_form_wide_1d(n).unwrap();
        let f = GridFunction { values: vec![0.0; n] };
        let h = 1.0 / n as f64;
        let (phi, diag) = solve_barrier(&f, &s, 1.0, &c, 1.0, 1.0 / 3.0, h, SolveMethod::Auto).unwrap();
        let want = h.powf(1.0 / 3.0);
        assert!(phi.values.iter().all(|v| (v - want).abs() < 1e-12));
        assert!((diag.sup_norm - want).abs() < 1e-12);
        assert!(diag.lipschitz_estimate < 1e-9);
    }

    #[test]
    fn shell_points_sit_at_their_radius() {
        let c = generate_cloud(Manifold::sphere(), 500, 0).unwrap();
        let p = shell_point(&c, 0.3).unwrap();
        assert!((c.manifold.geodesic_distance(c.x0(), &p).unwrap() - 0.3).abs() < 1e-12);
    }
}
