//! Monotone stencils for `-div(A grad u)` in geodesic normal coordinates.
//!
//! Each stencil solves a small linear program: consistency rows from
//! [`moments`], sign constraints making every off-center row entry
//! nonpositive, and an ℓ¹ objective. A closed-form wide stencil on the
//! uniform circle is provided for comparison experiments.

pub mod lp;
pub mod moments;

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{invalid, Error, Result};
use crate::geometry::{Manifold, ManifoldKind, ManifoldPoint, TangentVector};
use lp::{LinearProgram, LpFailure};
use moments::Component;

pub type ScalarField = Arc<dyn Fn(&ManifoldPoint) -> f64 + Send + Sync>;
/// Returns the d×d matrix row-major in the global chart of a torus.
pub type TensorField = Arc<dyn Fn(&ManifoldPoint) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub enum CoefficientField {
    Isotropic(ScalarField),
    /// Only available on the tori, where the chart frame is global.
    Tensor(TensorField),
}

/// The continuous problem `-div(A grad u) + f = 0`.
#[derive(Clone)]
pub struct OperatorSpec {
    pub coefficient: CoefficientField,
    pub source: ScalarField,
    /// Consistency order used for the proper term `h^α`.
    pub alpha: f64,
}

impl fmt::Debug for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.coefficient {
            CoefficientField::Isotropic(_) => "isotropic",
            CoefficientField::Tensor(_) => "tensor",
        };
        f.debug_struct("OperatorSpec").field("coefficient", &kind).field("alpha", &self.alpha).finish()
    }
}

impl OperatorSpec {
    pub fn new(coefficient: CoefficientField, source: ScalarField, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return invalid(format!("consistency order must lie in (0, 2], got {alpha}"));
        }
        Ok(OperatorSpec { coefficient, source, alpha })
    }

    /// `-Δu + f` with unit coefficient.
    pub fn laplacian(source: ScalarField, alpha: f64) -> Result<Self> {
        Self::new(CoefficientField::Isotropic(Arc::new(|_| 1.0)), source, alpha)
    }

    /// `A(x)` in the normal-coordinate frame, row-major d×d.
    pub fn chart_matrix(&self, m: &Manifold, x: &ManifoldPoint) -> Result<Vec<f64>> {
        let d = m.dimension();
        match &self.coefficient {
            CoefficientField::Isotropic(a) => {
                let v = a(x);
                Ok((0..d * d).map(|i| if i % (d + 1) == 0 { v } else { 0.0 }).collect())
            }
            CoefficientField::Tensor(_) if m.kind == ManifoldKind::Sphere2 => {
                Err(Error::Unsupported("tensor coefficients on the sphere; use an isotropic field".into()))
            }
            CoefficientField::Tensor(t) => {
                let v = t(x);
                if v.len() != d * d {
                    return invalid(format!("tensor field returned {} entries, expected {}", v.len(), d * d));
                }
                Ok(v)
            }
        }
    }

    /// Symmetric positive definite coefficients at every node.
    pub fn validate(&self, c: &PointCloud) -> Result<()> {
        let d = c.manifold.dimension();
        for (i, p) in c.points.iter().enumerate() {
            let a = self.chart_matrix(&c.manifold, p)?;
            let ok = if d == 1 {
                a[0] > 0.0
            } else {
                (a[1] - a[2]).abs() <= 1e-12 && a[0] > 0.0 && a[0] * a[3] - a[1] * a[2] > 0.0
            };
            if !ok || a.iter().any(|v| !v.is_finite()) {
                return invalid(format!("coefficient is not symmetric positive definite at node {i}"));
            }
        }
        Ok(())
    }
}

/// Raw coefficients `c_k(i, j)` before contraction with the field values.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub components: Vec<Component>,
    /// Global indices of the flux points `J`.
    pub flux_indices: Vec<usize>,
    /// `a_k(x_j)`, indexed `[k][j]`.
    pub flux_values: Vec<Vec<f64>>,
    pub entries: Vec<CoefficientEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientEntry {
    pub component: usize,
    pub neighbor: usize,
    /// Slot in `flux_indices`.
    pub flux_slot: usize,
    pub value: f64,
}

impl CoefficientTable {
    /// Row weights `-Σ_k Σ_j c_k(i, j) a_k(x_j)` for the given neighbors.
    pub fn contract(&self, neighbor_indices: &[usize]) -> Vec<f64> {
        let mut w = vec![0.0; neighbor_indices.len()];
        for e in &self.entries {
            if let Some(pos) = neighbor_indices.iter().position(|&i| i == e.neighbor) {
                w[pos] -= e.value * self.flux_values[e.component][e.flux_slot];
            }
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub center_index: usize,
    /// Center first.
    pub neighbor_indices: Vec<usize>,
    /// Row entries, aligned with `neighbor_indices`.
    pub coefficients: Vec<f64>,
    pub radius: f64,
    pub consistency_residual: f64,
    /// Min over off-center entries of `-coefficient`.
    pub monotonicity_margin: f64,
    raw: Option<CoefficientTable>,
}

impl Stencil {
    pub fn apply(&self, u: &[f64]) -> f64 {
        self.neighbor_indices.iter().zip(&self.coefficients).map(|(&i, &w)| w * u[i]).sum()
    }

    pub fn row_sum(&self) -> f64 {
        self.coefficients.iter().sum()
    }
}

/// Raw `c_k(i, j)` table of a synthesized stencil.
pub fn decompose_divergence_form(s: &Stencil) -> Result<CoefficientTable> {
    s.raw.clone().ok_or_else(|| Error::Unsupported("closed-form stencils carry no divergence-form table".into()))
}

/// Normal coordinates of every node within `radius` of the center, center
/// first.
pub fn tangent_coordinates(c: &PointCloud, center_index: usize, radius: f64) -> Result<Vec<(usize, TangentVector)>> {
    let base = c.points[center_index];
    c.neighbors_within(center_index, radius)
        .into_iter()
        .map(|j| Ok((j, c.manifold.log_map(&base, &c.points[j])?)))
        .collect()
}

fn min_neighbors(d: usize) -> usize {
    if d == 1 {
        5
    } else {
        12
    }
}

fn flux_count(d: usize) -> usize {
    if d == 1 {
        3
    } else {
        7
    }
}

fn is_isotropic(a: &[f64], d: usize) -> bool {
    if d == 1 {
        return true;
    }
    let scale = a[0].abs().max(a[3].abs());
    a[1].abs() <= 1e-14 * scale && a[2].abs() <= 1e-14 * scale && (a[0] - a[3]).abs() <= 1e-12 * scale
}

/// Scaled consistency residual accepted from the LP.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Solves the consistency and monotonicity system on one neighborhood.
///
/// `nbrs` must start with the center (zero vector); `a_values` holds the
/// row-major d×d coefficient matrix at each neighbor. Offsets are scaled by
/// `r`, so the stored residual is resolution independent.
pub fn synthesize_stencil(nbrs: &[(usize, TangentVector)], a_values: &[Vec<f64>], h: f64, r: f64) -> Result<Stencil> {
    let Some((center, v0)) = nbrs.first() else {
        return invalid("empty neighborhood");
    };
    let d = v0.components.len();
    if v0.norm() != 0.0 {
        return invalid("first neighbor must be the center");
    }
    if a_values.len() != nbrs.len() || a_values.iter().any(|a| a.len() != d * d) {
        return invalid("one d×d coefficient matrix per neighbor is required");
    }
    if !(r >= h && h > 0.0) {
        return invalid(format!("stencil radius {r} below fill distance {h}"));
    }
    let infeasible = || Error::InfeasibleAtRadius { center: *center, radius: r };
    let n_nb = nbrs.len();
    if n_nb < min_neighbors(d) {
        return Err(infeasible());
    }

    // Flux points: the nearest few neighbors, center included.
    let mut order: Vec<usize> = (0..n_nb).collect();
    order.sort_by(|&p, &q| nbrs[p].1.norm().total_cmp(&nbrs[q].1.norm()).then(p.cmp(&q)));
    let flux: Vec<usize> = order[..flux_count(d)].to_vec();
    let nf = flux.len();

    let components: Vec<Component> = if a_values.iter().all(|a| is_isotropic(a, d)) {
        vec![Component::Trace]
    } else {
        vec![Component::Entry(0, 0), Component::Entry(0, 1), Component::Entry(1, 1)]
    };
    let value = |k: Component, a: &[f64]| match k {
        Component::Trace => a[0],
        Component::Entry(p, q) => a[p * d + q],
    };
    let flux_values: Vec<Vec<f64>> =
        components.iter().map(|&k| flux.iter().map(|&j| value(k, &a_values[j])).collect()).collect();

    let scaled: Vec<Vec<f64>> = nbrs.iter().map(|(_, v)| v.components.iter().map(|x| x / r).collect()).collect();

    let nk = components.len();
    let rpc = moments::rows_per_component(d, nf);
    let n_vars = nk * n_nb * nf;
    let n_mono = n_nb - 1;
    let rows = nk * rpc + n_mono;
    let cols = 2 * n_vars + n_mono;
    let var = |k: usize, i: usize, j: usize| (k * n_nb + i) * nf + j;

    let mut a = vec![0.0; rows * cols];
    let mut b = vec![0.0; rows];
    let mut col = vec![0.0; rpc];
    let amax = flux_values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for (ki, &k) in components.iter().enumerate() {
        b[ki * rpc..(ki + 1) * rpc].copy_from_slice(&moments::block(k, d, nf));
        for i in 0..n_nb {
            for (js, &j) in flux.iter().enumerate() {
                moments::column(&scaled[i], &scaled[j], js, nf, &mut col);
                let v = var(ki, i, js);
                for (rr, &cv) in col.iter().enumerate() {
                    let row = ki * rpc + rr;
                    a[row * cols + v] = cv;
                    a[row * cols + n_vars + v] = -cv;
                }
                if i > 0 {
                    let row = nk * rpc + (i - 1);
                    let w = flux_values[ki][js] / amax;
                    a[row * cols + v] = w;
                    a[row * cols + n_vars + v] = -w;
                }
            }
        }
    }
    for i in 1..n_nb {
        let row = nk * rpc + (i - 1);
        a[row * cols + 2 * n_vars + (i - 1)] = -1.0;
    }
    let mut cost = vec![1.0; 2 * n_vars];
    cost.extend(std::iter::repeat_n(0.0, n_mono));

    let program = LinearProgram { a, b, c: cost, rows, cols };
    let sol = match program.solve() {
        Ok(s) => s,
        Err(LpFailure::Infeasible { .. }) | Err(LpFailure::Unbounded) | Err(LpFailure::IterationLimit) => {
            return Err(infeasible())
        }
    };
    let mut ct: Vec<f64> = (0..n_vars).map(|v| sol.x[v] - sol.x[n_vars + v]).collect();
    // The flux rows force Σ_i c(i, j) = 0; make it exact on the center.
    for ki in 0..nk {
        for js in 0..nf {
            let rest: f64 = (1..n_nb).map(|i| ct[var(ki, i, js)]).sum();
            ct[var(ki, 0, js)] = -rest;
        }
    }

    let mut residual = 0.0f64;
    for (ki, &k) in components.iter().enumerate() {
        let target = moments::block(k, d, nf);
        let mut acc = vec![0.0; rpc];
        for i in 0..n_nb {
            for (js, &j) in flux.iter().enumerate() {
                let cv = ct[var(ki, i, js)];
                if cv != 0.0 {
                    moments::column(&scaled[i], &scaled[j], js, nf, &mut col);
                    for (acc_r, &c_r) in acc.iter_mut().zip(&col) {
                        *acc_r += cv * c_r;
                    }
                }
            }
        }
        for (x, t) in acc.iter().zip(&target) {
            residual = residual.max((x - t).abs());
        }
    }
    if residual > RESIDUAL_TOL {
        return Err(infeasible());
    }

    let inv_r2 = 1.0 / (r * r);
    let mut entries = Vec::new();
    for ki in 0..nk {
        for i in 0..n_nb {
            for js in 0..nf {
                let cv = ct[var(ki, i, js)];
                if cv != 0.0 {
                    entries.push(CoefficientEntry {
                        component: ki,
                        neighbor: nbrs[i].0,
                        flux_slot: js,
                        value: cv * inv_r2,
                    });
                }
            }
        }
    }
    let table =
        CoefficientTable { components, flux_indices: flux.iter().map(|&j| nbrs[j].0).collect(), flux_values, entries };
    let neighbor_indices: Vec<usize> = nbrs.iter().map(|e| e.0).collect();
    let mut coefficients = table.contract(&neighbor_indices);
    coefficients[0] = -coefficients[1..].iter().sum::<f64>();
    let margin = coefficients[1..].iter().map(|w| -w).fold(f64::INFINITY, f64::min);

    Ok(Stencil {
        center_index: *center,
        neighbor_indices,
        coefficients,
        radius: r,
        consistency_residual: residual,
        monotonicity_margin: margin,
        raw: Some(table),
    })
}

/// Radius schedule for the synthesis driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    /// Initial radius is `radius_factor · h + sqrt_factor · √h`.
    pub radius_factor: f64,
    pub sqrt_factor: f64,
    pub widen_factor: f64,
    pub max_widenings: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions { radius_factor: 5.0, sqrt_factor: 0.0, widen_factor: 1.5, max_widenings: 4 }
    }
}

impl SynthesisOptions {
    pub fn initial_radius(&self, h: f64) -> f64 {
        self.radius_factor * h + self.sqrt_factor * h.sqrt()
    }
}

/// Synthesizes the stencil of one node, widening the radius on failure.
pub fn synthesize_at(c: &PointCloud, spec: &OperatorSpec, center: usize, opts: &SynthesisOptions) -> Result<Stencil> {
    let h = c.fill_distance;
    let mut r = opts.initial_radius(h);
    let mut last = None;
    for _ in 0..=opts.max_widenings {
        let attempt = tangent_coordinates(c, center, r).and_then(|nbrs| {
            let a_values =
                nbrs.iter().map(|(j, _)| spec.chart_matrix(&c.manifold, &c.points[*j])).collect::<Result<Vec<_>>>()?;
            synthesize_stencil(&nbrs, &a_values, h, r)
        });
        match attempt {
            Ok(s) => return Ok(s),
            Err(e @ (Error::InfeasibleAtRadius { .. } | Error::CutLocus { .. })) => last = Some(e),
            Err(e) => return Err(e),
        }
        r *= opts.widen_factor;
    }
    Err(last.unwrap_or(Error::InfeasibleAtRadius { center, radius: r }))
}

/// One stencil per node.
pub fn synthesize_all(c: &PointCloud, spec: &OperatorSpec, opts: &SynthesisOptions) -> Result<Vec<Stencil>> {
    spec.validate(c)?;
    (0..c.len()).map(|i| synthesize_at(c, spec, i, opts)).collect()
}

/// The wide three-point Laplacian on the uniform n-grid of the circle:
/// `(2u_i - u_{i-√n} - u_{i+√n}) / (n h²)` with `h = 1/n`.
pub fn closed_form_wide_1d(n: usize) -> Result<Vec<Stencil>> {
    let is_power_of_four = n.is_power_of_two() && n.trailing_zeros().is_multiple_of(2);
    if n < 4 || !is_power_of_four {
        return invalid(format!("wide stencil needs n = 4^k ≥ 4, got {n}"));
    }
    let m = (n as f64).sqrt().round() as usize;
    let nf = n as f64;
    let off = -nf; // -1/(n h²) with h = 1/n
    Ok((0..n)
        .map(|i| {
            let left = (i + n - m) % n;
            let right = (i + m) % n;
            let (neighbor_indices, coefficients) = if left == right {
                (vec![i, left], vec![2.0 * nf, 2.0 * off])
            } else {
                (vec![i, left, right], vec![2.0 * nf, off, off])
            };
            Stencil {
                center_index: i,
                neighbor_indices,
                coefficients,
                radius: m as f64 / nf,
                consistency_residual: 0.0,
                monotonicity_margin: nf,
                raw: None,
            }
        })
        .collect())
}

/// Per-stencil audit record written next to the weight dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StencilMeta {
    pub center: usize,
    pub r: f64,
    pub residual: f64,
    pub margin: f64,
}

pub fn stencils_csv(stencils: &[Stencil]) -> String {
    let mut s = String::from("center,neighbor,weight\n");
    for st in stencils {
        for (j, w) in st.neighbor_indices.iter().zip(&st.coefficients) {
            let _ = writeln!(s, "{},{},{}", st.center_index, j, w);
        }
    }
    s
}

pub fn write_stencils(stencils: &[Stencil], csv_path: &Path, json_path: &Path) -> Result<()> {
    std::fs::write(csv_path, stencils_csv(stencils))?;
    let meta: Vec<StencilMeta> = stencils
        .iter()
        .map(|s| StencilMeta {
            center: s.center_index,
            r: s.radius,
            residual: s.consistency_residual,
            margin: s.monotonicity_margin,
        })
        .collect();
    std::fs::write(json_path, serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::generate_cloud;

    fn offsets_1d(k: &[f64]) -> Vec<(usize, TangentVector)> {
        let base = ManifoldPoint::Circle(0.0);
        k.iter().enumerate().map(|(i, &x)| (i, TangentVector { base, components: vec![x] })).collect()
    }

    fn five_point(h: f64) -> Vec<(usize, TangentVector)> {
        offsets_1d(&[0.0, -h, h, -2.0 * h, 2.0 * h])
    }

    #[test]
    fn tangent_coordinate_examples() {
        let c = generate_cloud(Manifold::circle(), 16, 0).unwrap();
        let t = tangent_coordinates(&c, 0, 0.2).unwrap();
        let mut xs: Vec<f64> = t.iter().map(|(_, v)| v.components[0] * 16.0).collect();
        xs.sort_by(f64::total_cmp);
        let want = [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0];
        assert_eq!(xs.len(), want.len());
        for (x, w) in xs.iter().zip(want) {
            assert!((x - w).abs() < 1e-12);
        }
        let lone = tangent_coordinates(&c, 5, 0.01).unwrap();
        assert_eq!(lone.len(), 1);
        assert_eq!(lone[0].1.norm(), 0.0);
    }

    #[test]
    fn five_point_synthesis_is_sound() {
        let h = 0.05;
        let nbrs = five_point(h);
        let a = vec![vec![1.0]; 5];
        let s = synthesize_stencil(&nbrs, &a, h, 2.0 * h).unwrap();
        assert!(s.consistency_residual <= 1e-9);
        assert!(s.monotonicity_margin >= -1e-12);
        assert!(s.row_sum().abs() <= 1e-10);
        // u = x² with a = 1: -(u')' = -2.
        let u: Vec<f64> = nbrs.iter().map(|(_, v)| v.components[0].powi(2)).collect();
        assert!((s.apply(&u) + 2.0).abs() < 1e-8);
        let ones = vec![3.5; 5];
        assert!(s.apply(&ones).abs() < 1e-10);
    }

    #[test]
    fn particular_solution_is_optimal_feasible_point() {
        // The closed-form solution is feasible with ℓ¹ norm 1/h², so the LP
        // optimum can be no larger.
        let h = 0.1;
        let nbrs = five_point(h);
        let a = vec![vec![1.0]; 5];
        let s = synthesize_stencil(&nbrs, &a, h, 2.0 * h).unwrap();
        let table = decompose_divergence_form(&s).unwrap();
        let l1: f64 = table.entries.iter().map(|e| e.value.abs()).sum();
        assert!(l1 <= 1.0 / (h * h) + 1e-9);
    }

    #[test]
    fn variable_coefficient_reproduces_flux_form() {
        // a(x) = 1 + x, u = x²: (a u')' = a' u' + a u'' = 2 at x = 0, up to
        // the O(r) cubic terms.
        let h = 0.02;
        let nbrs = five_point(h);
        let a: Vec<Vec<f64>> = nbrs.iter().map(|(_, v)| vec![1.0 + v.components[0]]).collect();
        let s = synthesize_stencil(&nbrs, &a, h, 2.0 * h).unwrap();
        let u: Vec<f64> = nbrs.iter().map(|(_, v)| v.components[0].powi(2)).collect();
        assert!((s.apply(&u) + 2.0).abs() < 4.0 * h);
        // u = x: (a u')' = a' = 1, exactly.
        let u: Vec<f64> = nbrs.iter().map(|(_, v)| v.components[0]).collect();
        assert!((s.apply(&u) + 1.0).abs() < 1e-8);
    }

    #[test]
    fn too_few_neighbors_is_infeasible() {
        let nbrs = offsets_1d(&[0.0, -0.1, 0.1]);
        let r = synthesize_stencil(&nbrs, &vec![vec![1.0]; 3], 0.1, 0.2);
        assert!(matches!(r, Err(Error::InfeasibleAtRadius { .. })));
    }

    #[test]
    fn decomposition_roundtrip() {
        let c = generate_cloud(Manifold::sphere(), 400, 0).unwrap();
        let spec = OperatorSpec::laplacian(Arc::new(|_| 0.0), 1.0).unwrap();
        for i in [0, 17, 399] {
            let s = synthesize_at(&c, &spec, i, &SynthesisOptions::default()).unwrap();
            let t = decompose_divergence_form(&s).unwrap();
            let w = t.contract(&s.neighbor_indices);
            let scale = s.coefficients.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (x, y) in w.iter().zip(&s.coefficients) {
                assert!((x - y).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn closed_form_rejects_bad_sizes() {
        assert!(closed_form_wide_1d(8).is_err());
        assert!(closed_form_wide_1d(1).is_err());
        assert!(closed_form_wide_1d(15).is_err());
        let s = closed_form_wide_1d(16).unwrap();
        assert!(decompose_divergence_form(&s[0]).is_err());
    }

    #[test]
    fn closed_form_sixteen() {
        let s = closed_form_wide_1d(16).unwrap();
        assert_eq!(s.len(), 16);
        assert_eq!(s[0].neighbor_indices, vec![0, 12, 4]);
        assert_eq!(s[0].coefficients, vec![32.0, -16.0, -16.0]);
        for st in &s {
            assert_eq!(st.apply(&[1.7; 16]), 0.0);
        }
        // n = 4 merges the two off-center entries.
        let s4 = closed_form_wide_1d(4).unwrap();
        assert_eq!(s4[1].neighbor_indices, vec![1, 3]);
        assert_eq!(s4[1].coefficients, vec![8.0, -8.0]);
    }

    #[test]
    fn closed_form_sine_truncation_at_zero() {
        use std::f64::consts::PI;
        for n in [16usize, 256, 4096] {
            let s = closed_form_wide_1d(n).unwrap();
            let u: Vec<f64> = (0..n).map(|i| (2.0 * PI * i as f64 / n as f64).sin()).collect();
            // -u''(0) = 4π² sin(0) = 0; the sine is odd, so the row is exact.
            assert!(s[0].apply(&u).abs() < 1e-9 * n as f64);
        }
    }

    #[test]
    fn sphere_stencils_are_monotone_and_exact_on_quadratics() {
        let c = generate_cloud(Manifold::sphere(), 300, 0).unwrap();
        let spec = OperatorSpec::laplacian(Arc::new(|_| 0.0), 1.0).unwrap();
        for i in (0..300).step_by(29) {
            let s = synthesize_at(&c, &spec, i, &SynthesisOptions::default()).unwrap();
            assert!(s.consistency_residual <= 1e-9);
            assert!(s.coefficients[1..].iter().all(|&w| w <= 1e-12));
            let t = tangent_coordinates(&c, i, s.radius).unwrap();
            // q = x² + 3xy - y², -Δq = -(2 - 2) = 0; q = x² + y² gives -4.
            let q1: Vec<f64> = t
                .iter()
                .map(|(_, v)| {
                    let (x, y) = (v.components[0], v.components[1]);
                    x * x + 3.0 * x * y - y * y
                })
                .collect();
            let q2: Vec<f64> = t.iter().map(|(_, v)| v.norm().powi(2)).collect();
            let local = |u: &[f64]| s.coefficients.iter().zip(u).map(|(w, x)| w * x).sum::<f64>();
            let scale = s.coefficients[0].abs() * s.radius * s.radius;
            assert!(local(&q1).abs() <= 1e-8 * scale.max(1.0));
            assert!((local(&q2) + 4.0).abs() <= 1e-8 * scale.max(1.0));
        }
    }

    #[test]
    fn anisotropic_torus_stencil() {
        let c = generate_cloud(Manifold::torus(), 256, 0).unwrap();
        let field: TensorField = Arc::new(|p: &ManifoldPoint| {
            let x = p.coords()[0];
            let a = 2.0 + (2.0 * std::f64::consts::PI * x).sin();
            vec![a, 0.3, 0.3, 1.0]
        });
        let spec = OperatorSpec::new(CoefficientField::Tensor(field), Arc::new(|_| 0.0), 1.0).unwrap();
        spec.validate(&c).unwrap();
        let s = synthesize_at(&c, &spec, 37, &SynthesisOptions::default()).unwrap();
        assert!(s.consistency_residual <= 1e-9);
        assert!(s.monotonicity_margin >= -1e-12);
        assert_eq!(decompose_divergence_form(&s).unwrap().components.len(), 3);
    }

    #[test]
    fn tensor_on_sphere_is_unsupported() {
        let field: TensorField = Arc::new(|_| vec![1.0, 0.0, 0.0, 1.0]);
        let spec = OperatorSpec::new(CoefficientField::Tensor(field), Arc::new(|_| 0.0), 1.0).unwrap();
        let c = generate_cloud(Manifold::sphere(), 100, 0).unwrap();
        assert!(matches!(spec.validate(&c), Err(Error::Unsupported(_))));
    }

    #[test]
    fn dump_format() {
        let s = closed_form_wide_1d(16).unwrap();
        let csv = stencils_csv(&s[..1]);
        assert_eq!(csv, "center,neighbor,weight\n0,0,32\n0,12,-16\n0,4,-16\n");
    }
}
