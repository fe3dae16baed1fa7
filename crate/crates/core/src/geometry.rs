//! Closed manifolds with closed-form geodesics: the unit-circumference
//! circle, the flat unit torus and the unit sphere.
//!
//! Tangent vectors are expressed in geodesic normal coordinates about their
//! base point. On the tori the chart basis is the global coordinate frame.
//! On the sphere it is the local (east, north) frame, with a fixed fallback
//! at the poles.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Margin kept below the injectivity radius before log/exp refuse to act.
pub const CUT_LOCUS_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ManifoldKind {
    /// T¹ parameterized as [0, 1) with circumference 1.
    #[serde(rename = "circle1", alias = "torus1")]
    Circle1,
    /// [0, 1)² with wraparound in both coordinates.
    #[serde(rename = "torus2")]
    FlatTorus2,
    /// Unit sphere embedded in R³.
    #[serde(rename = "sphere2")]
    Sphere2,
}

impl ManifoldKind {
    pub fn name(self) -> &'static str {
        match self {
            ManifoldKind::Circle1 => "circle1",
            ManifoldKind::FlatTorus2 => "torus2",
            ManifoldKind::Sphere2 => "sphere2",
        }
    }
}

impl std::str::FromStr for ManifoldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circle1" | "torus1" => Ok(ManifoldKind::Circle1),
            "torus2" => Ok(ManifoldKind::FlatTorus2),
            "sphere2" => Ok(ManifoldKind::Sphere2),
            other => invalid(format!("unknown manifold `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifold {
    pub kind: ManifoldKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ManifoldPoint {
    Circle(f64),
    Torus([f64; 2]),
    Sphere([f64; 3]),
}

/// A vector in the tangent plane at `base`, in geodesic normal coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: ManifoldPoint,
    pub components: Vec<f64>,
}

impl TangentVector {
    pub fn norm(&self) -> f64 {
        self.components.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn zero(base: ManifoldPoint, dim: usize) -> Self {
        TangentVector { base, components: vec![0.0; dim] }
    }
}

fn wrap_unit(x: f64) -> f64 {
    let w = x.rem_euclid(1.0);
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Shortest signed displacement on the unit circle, in [-1/2, 1/2).
fn wrap_signed(d: f64) -> f64 {
    let w = (d + 0.5).rem_euclid(1.0) - 0.5;
    if w >= 0.5 {
        w - 1.0
    } else {
        w
    }
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm3(a: &[f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

fn scale3(a: &[f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

impl ManifoldPoint {
    /// Point on T¹; the coordinate is wrapped into [0, 1).
    pub fn circle(x: f64) -> Self {
        ManifoldPoint::Circle(wrap_unit(x))
    }

    pub fn torus(x: f64, y: f64) -> Self {
        ManifoldPoint::Torus([wrap_unit(x), wrap_unit(y)])
    }

    /// Point on S²; the input is normalized.
    pub fn sphere(v: [f64; 3]) -> Result<Self> {
        let n = norm3(&v);
        if !(n.is_finite() && n > 0.0) {
            return invalid("sphere point must be a nonzero finite vector");
        }
        Ok(ManifoldPoint::Sphere(scale3(&v, 1.0 / n)))
    }

    pub fn coords(&self) -> &[f64] {
        match self {
            ManifoldPoint::Circle(x) => std::slice::from_ref(x),
            ManifoldPoint::Torus(c) => c,
            ManifoldPoint::Sphere(c) => c,
        }
    }

    pub fn kind(&self) -> ManifoldKind {
        match self {
            ManifoldPoint::Circle(_) => ManifoldKind::Circle1,
            ManifoldPoint::Torus(_) => ManifoldKind::FlatTorus2,
            ManifoldPoint::Sphere(_) => ManifoldKind::Sphere2,
        }
    }
}

/// Orthonormal chart basis (east, north) of the tangent plane at `p` on S².
pub fn sphere_frame(p: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let east_raw = [-p[1], p[0], 0.0];
    let len = norm3(&east_raw);
    let east = if len > 1e-8 {
        scale3(&east_raw, 1.0 / len)
    } else {
        // At the poles use the x axis projected onto the tangent plane.
        let x = [1.0, 0.0, 0.0];
        let proj = [x[0] - p[0] * dot3(&x, p), x[1] - p[1] * dot3(&x, p), x[2] - p[2] * dot3(&x, p)];
        scale3(&proj, 1.0 / norm3(&proj))
    };
    let north = cross3(p, &east);
    (east, north)
}

impl Manifold {
    pub fn new(kind: ManifoldKind) -> Self {
        Manifold { kind }
    }

    pub fn circle() -> Self {
        Self::new(ManifoldKind::Circle1)
    }

    pub fn torus() -> Self {
        Self::new(ManifoldKind::FlatTorus2)
    }

    pub fn sphere() -> Self {
        Self::new(ManifoldKind::Sphere2)
    }

    pub fn dimension(&self) -> usize {
        match self.kind {
            ManifoldKind::Circle1 => 1,
            ManifoldKind::FlatTorus2 | ManifoldKind::Sphere2 => 2,
        }
    }

    pub fn total_volume(&self) -> f64 {
        match self.kind {
            ManifoldKind::Circle1 | ManifoldKind::FlatTorus2 => 1.0,
            ManifoldKind::Sphere2 => 4.0 * PI,
        }
    }

    /// Injectivity radius: π on the sphere, 1/2 per axis on the tori.
    pub fn injectivity_radius(&self) -> f64 {
        match self.kind {
            ManifoldKind::Circle1 | ManifoldKind::FlatTorus2 => 0.5,
            ManifoldKind::Sphere2 => PI,
        }
    }

    /// Largest geodesic distance between any two points.
    pub fn diameter(&self) -> f64 {
        match self.kind {
            ManifoldKind::Circle1 => 0.5,
            ManifoldKind::FlatTorus2 => 0.5 * 2f64.sqrt(),
            ManifoldKind::Sphere2 => PI,
        }
    }

    pub fn check(&self, p: &ManifoldPoint) -> Result<()> {
        if p.kind() != self.kind {
            return invalid(format!("point of kind {} used on manifold {}", p.kind().name(), self.kind.name()));
        }
        if p.coords().iter().any(|c| !c.is_finite()) {
            return invalid("point has non-finite coordinates");
        }
        match p {
            ManifoldPoint::Sphere(c) if (norm3(c) - 1.0).abs() > 1e-12 => invalid("sphere point is not unit norm"),
            ManifoldPoint::Circle(x) if !(0.0..1.0).contains(x) => invalid("circle coordinate outside [0, 1)"),
            ManifoldPoint::Torus(c) if c.iter().any(|x| !(0.0..1.0).contains(x)) => {
                invalid("torus coordinate outside [0, 1)")
            }
            _ => Ok(()),
        }
    }

    pub fn geodesic_distance(&self, p: &ManifoldPoint, q: &ManifoldPoint) -> Result<f64> {
        self.check(p)?;
        self.check(q)?;
        Ok(distance_unchecked(p, q))
    }

    /// Geodesic normal coordinates of `p` about `base`.
    pub fn log_map(&self, base: &ManifoldPoint, p: &ManifoldPoint) -> Result<TangentVector> {
        self.check(base)?;
        self.check(p)?;
        let limit = self.injectivity_radius() - CUT_LOCUS_MARGIN;
        let components = match (base, p) {
            (ManifoldPoint::Circle(a), ManifoldPoint::Circle(b)) => {
                let d = wrap_signed(b - a);
                if d.abs() >= limit {
                    return Err(Error::CutLocus { distance: d.abs(), limit });
                }
                vec![d]
            }
            (ManifoldPoint::Torus(a), ManifoldPoint::Torus(b)) => {
                let d = [wrap_signed(b[0] - a[0]), wrap_signed(b[1] - a[1])];
                if let Some(&bad) = d.iter().find(|x| x.abs() >= limit) {
                    return Err(Error::CutLocus { distance: bad.abs(), limit });
                }
                d.to_vec()
            }
            (ManifoldPoint::Sphere(a), ManifoldPoint::Sphere(b)) => {
                let c = dot3(a, b);
                let w = [b[0] - c * a[0], b[1] - c * a[1], b[2] - c * a[2]];
                let s = norm3(&cross3(a, b));
                let theta = s.atan2(c);
                if theta >= limit {
                    return Err(Error::CutLocus { distance: theta, limit });
                }
                let wn = norm3(&w);
                if wn == 0.0 {
                    vec![0.0, 0.0]
                } else {
                    let v = scale3(&w, theta / wn);
                    let (e1, e2) = sphere_frame(a);
                    vec![dot3(&v, &e1), dot3(&v, &e2)]
                }
            }
            _ => unreachable!("kinds checked above"),
        };
        Ok(TangentVector { base: *base, components })
    }

    pub fn exp_map(&self, v: &TangentVector) -> Result<ManifoldPoint> {
        self.check(&v.base)?;
        if v.components.len() != self.dimension() {
            return invalid(format!(
                "tangent vector has {} components, manifold dimension is {}",
                v.components.len(),
                self.dimension()
            ));
        }
        let limit = self.injectivity_radius() - CUT_LOCUS_MARGIN;
        match &v.base {
            ManifoldPoint::Circle(a) => {
                let d = v.components[0];
                if d.abs() >= limit {
                    return Err(Error::CutLocus { distance: d.abs(), limit });
                }
                Ok(ManifoldPoint::circle(a + d))
            }
            ManifoldPoint::Torus(a) => {
                if let Some(&bad) = v.components.iter().find(|x| x.abs() >= limit) {
                    return Err(Error::CutLocus { distance: bad.abs(), limit });
                }
                Ok(ManifoldPoint::torus(a[0] + v.components[0], a[1] + v.components[1]))
            }
            ManifoldPoint::Sphere(a) => {
                let theta = v.norm();
                if theta >= limit {
                    return Err(Error::CutLocus { distance: theta, limit });
                }
                if theta == 0.0 {
                    return Ok(v.base);
                }
                let (e1, e2) = sphere_frame(a);
                let dir = [
                    (v.components[0] * e1[0] + v.components[1] * e2[0]) / theta,
                    (v.components[0] * e1[1] + v.components[1] * e2[1]) / theta,
                    (v.components[0] * e1[2] + v.components[1] * e2[2]) / theta,
                ];
                let (s, c) = theta.sin_cos();
                ManifoldPoint::sphere([c * a[0] + s * dir[0], c * a[1] + s * dir[1], c * a[2] + s * dir[2]])
            }
        }
    }

    /// Equal quadrature weight of a quasi-uniform cloud with `cloud_size` nodes.
    pub fn quadrature_weight(&self, cloud_size: usize) -> Result<f64> {
        if cloud_size == 0 {
            return invalid("quadrature over an empty cloud");
        }
        Ok(self.total_volume() / cloud_size as f64)
    }

    /// Chart basis at `base` as ambient vectors (columns), used to express
    /// ambient tensors in normal coordinates. Length `dimension()`, each of
    /// ambient length (1, 2 or 3).
    pub fn chart_basis(&self, base: &ManifoldPoint) -> Vec<Vec<f64>> {
        match base {
            ManifoldPoint::Circle(_) => vec![vec![1.0]],
            ManifoldPoint::Torus(_) => vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            ManifoldPoint::Sphere(p) => {
                let (e1, e2) = sphere_frame(p);
                vec![e1.to_vec(), e2.to_vec()]
            }
        }
    }
}

/// Geodesic distance without validating the inputs. Both points must be of
/// the same kind.
pub(crate) fn distance_unchecked(p: &ManifoldPoint, q: &ManifoldPoint) -> f64 {
    match (p, q) {
        (ManifoldPoint::Circle(a), ManifoldPoint::Circle(b)) => wrap_signed(b - a).abs(),
        (ManifoldPoint::Torus(a), ManifoldPoint::Torus(b)) => {
            let dx = wrap_signed(b[0] - a[0]);
            let dy = wrap_signed(b[1] - a[1]);
            (dx * dx + dy * dy).sqrt()
        }
        (ManifoldPoint::Sphere(a), ManifoldPoint::Sphere(b)) => norm3(&cross3(a, b)).atan2(dot3(a, b)),
        _ => f64::NAN,
    }
}
