//! Discrete systems built from per-node stencils.
//!
//! Every system is `(L^h + ε I) u = rhs` with `rhs = -f` on PDE rows, so the
//! rows represent `L^h u + ε u + f = 0`. Pinned rows are `u_i = 0`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{invalid, Error, Result};
use crate::solver::{self, SolveMethod, SparseOperator};
use crate::stencil::{OperatorSpec, Stencil};

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(c: &PointCloud, values: Vec<f64>) -> Result<Self> {
        if values.len() != c.len() {
            return invalid(format!("{} values for a cloud of {}", values.len(), c.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("grid function has non-finite values");
        }
        Ok(GridFunction { values })
    }

    /// Samples `u` at every node.
    pub fn sample(c: &PointCloud, u: impl Fn(&crate::ManifoldPoint) -> f64) -> Self {
        GridFunction { values: c.points.iter().map(u).collect() }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SystemKind {
    /// PDE rows everywhere except an identity row at x₀.
    Naive,
    /// PDE rows everywhere; the pin is applied after solving.
    TwoStepStage1,
    /// Identity rows on the closed cap of radius 2h^γ about x₀.
    Cap,
    /// Unit right-hand side with an identity row at x₀.
    WSystem,
}

#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    pub operator: SparseOperator,
    pub rhs: Vec<f64>,
    pub kind: SystemKind,
    /// Smallest proper weight over PDE rows.
    pub proper_epsilon: f64,
    pub proper_weights: Vec<f64>,
    pub pinned: Vec<bool>,
    pub x0_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationReport {
    pub residual: Vec<f64>,
    pub max_abs: f64,
}

/// `h^α` at every node, with `h` the fill distance.
pub fn default_proper_weights(spec: &OperatorSpec, c: &PointCloud) -> Vec<f64> {
    vec![c.fill_distance.powf(spec.alpha); c.len()]
}

/// `h(1 + x_i)` on the circle with `h = 1/n`.
pub fn circle_reproduction_weights(c: &PointCloud) -> Vec<f64> {
    let h = 1.0 / c.len() as f64;
    c.points.iter().map(|p| h * (1.0 + p.coords()[0])).collect()
}

fn build(
    stencils: &[Stencil],
    spec: &OperatorSpec,
    c: &PointCloud,
    weights: &[f64],
    pinned: Vec<bool>,
    rhs_override: Option<f64>,
    kind: SystemKind,
) -> Result<DiscreteSystem> {
    let n = c.len();
    if stencils.len() != n {
        return invalid(format!("{} stencils for {} nodes", stencils.len(), n));
    }
    if weights.len() != n || weights.iter().any(|w| !(*w > 0.0)) {
        return invalid("one positive proper weight per node is required");
    }
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; n];
    let mut eps = f64::INFINITY;
    for (i, s) in stencils.iter().enumerate() {
        if s.center_index != i {
            return invalid(format!("stencil {i} is centered at node {}", s.center_index));
        }
        if pinned[i] {
            triplets.push((i, i, 1.0));
            continue;
        }
        for (&j, &w) in s.neighbor_indices.iter().zip(&s.coefficients) {
            triplets.push((i, j, w));
        }
        triplets.push((i, i, weights[i]));
        eps = eps.min(weights[i]);
        rhs[i] = rhs_override.unwrap_or_else(|| -(spec.source)(&c.points[i]));
    }
    if eps == f64::INFINITY {
        return Err(Error::Degenerate("every node is pinned; no PDE rows remain".into()));
    }
    Ok(DiscreteSystem {
        operator: SparseOperator::from_triplets(n, triplets)?,
        rhs,
        kind,
        proper_epsilon: eps,
        proper_weights: weights.to_vec(),
        pinned,
        x0_index: c.x0_index,
    })
}

/// PDE rows at every node: stencil plus proper term, rhs `-f`.
pub fn assemble_proper(
    stencils: &[Stencil],
    spec: &OperatorSpec,
    c: &PointCloud,
    weights: &[f64],
) -> Result<DiscreteSystem> {
    build(stencils, spec, c, weights, vec![false; c.len()], None, SystemKind::TwoStepStage1)
}

/// PDE rows except for `u(x₀) = 0`.
pub fn assemble_naive_onepoint(
    stencils: &[Stencil],
    spec: &OperatorSpec,
    c: &PointCloud,
    weights: &[f64],
) -> Result<DiscreteSystem> {
    let mut pinned = vec![false; c.len()];
    pinned[c.x0_index] = true;
    build(stencils, spec, c, weights, pinned, None, SystemKind::Naive)
}

/// Auxiliary system with unit right-hand side and `w(x₀) = 0`.
pub fn assemble_w_system(
    stencils: &[Stencil],
    spec: &OperatorSpec,
    c: &PointCloud,
    weights: &[f64],
) -> Result<DiscreteSystem> {
    let mut pinned = vec![false; c.len()];
    pinned[c.x0_index] = true;
    build(stencils, spec, c, weights, pinned, Some(1.0), SystemKind::WSystem)
}

/// Nodes within the closed ball of radius `2h^γ` about x₀, with `h` the
/// fill distance.
pub fn cap_mask(c: &PointCloud, gamma: f64) -> Vec<bool> {
    let outer = 2.0 * c.fill_distance.powf(gamma);
    (0..c.len()).map(|i| c.distance_to_x0(i) <= outer).collect()
}

/// Identity rows on the cap, `L^h + h^α` with rhs `-f` elsewhere.
pub fn assemble_cap_scheme(
    stencils: &[Stencil],
    spec: &OperatorSpec,
    c: &PointCloud,
    gamma: f64,
) -> Result<DiscreteSystem> {
    if !(gamma > 0.0 && gamma < spec.alpha) {
        return invalid(format!("cap exponent must satisfy 0 < γ < α = {}, got {gamma}", spec.alpha));
    }
    let pinned = cap_mask(c, gamma);
    let weights = default_proper_weights(spec, c);
    build(stencils, spec, c, &weights, pinned, None, SystemKind::Cap)
}

pub fn solve_system(sys: &DiscreteSystem, method: SolveMethod, tol: f64) -> Result<GridFunction> {
    let mut x = solver::solve(&sys.operator, &sys.rhs, method, tol)?.x;
    // Identity rows hold exactly; drop solver round-off there.
    for (i, _) in sys.pinned.iter().enumerate().filter(|(_, p)| **p) {
        x[i] = sys.rhs[i];
    }
    Ok(GridFunction { values: x })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStepSolution {
    /// Stage-one solution.
    pub v: GridFunction,
    /// `v - v(x₀)`.
    pub u: GridFunction,
}

/// Solves stage one and subtracts the value at x₀.
pub fn solve_two_step(sys: &DiscreteSystem, method: SolveMethod, tol: f64) -> Result<TwoStepSolution> {
    if sys.kind != SystemKind::TwoStepStage1 {
        return invalid("two-step solve needs a stage-one system");
    }
    let v = solve_system(sys, method, tol)?;
    let pin = v.values[sys.x0_index];
    let u = GridFunction { values: v.values.iter().map(|x| x - pin).collect() };
    Ok(TwoStepSolution { v, u })
}

/// `operator · exact − rhs`, row by row.
pub fn truncation_report(sys: &DiscreteSystem, exact: &GridFunction) -> TruncationReport {
    let ax = sys.operator.mul_vec(&exact.values);
    let residual: Vec<f64> = ax.iter().zip(&sys.rhs).map(|(a, b)| a - b).collect();
    let max_abs = residual.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    TruncationReport { residual, max_abs }
}

impl DiscreteSystem {
    /// Matrix in coordinate text plus the right-hand side, one value per line.
    pub fn write(&self, matrix_path: &Path, rhs_path: &Path) -> Result<()> {
        std::fs::write(matrix_path, self.operator.to_matrix_market())?;
        std::fs::write(rhs_path, solver::vector_to_text(&self.rhs))?;
        Ok(())
    }

    pub fn certify(&self) -> solver::MMatrixCertificate {
        solver::certify_m_matrix(&self.operator, self.proper_epsilon.min(1.0))
    }
}
