//! Point clouds on the built-in manifolds: generators, fill distance and
//! radius queries.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{distance_unchecked, Manifold, ManifoldKind, ManifoldPoint};

/// Below this size neighbor queries scan every node.
pub const BRUTE_FORCE_LIMIT: usize = 2000;

/// Default number of fill-distance probes per cloud node.
pub const PROBES_PER_NODE: usize = 50;
/// Floor on the probe count so tiny clouds still get a fine probe set.
pub const MIN_PROBES: usize = 10_000;

#[derive(Debug, Clone)]
pub struct PointCloud {
    pub manifold: Manifold,
    pub points: Vec<ManifoldPoint>,
    pub nominal_h: f64,
    pub fill_distance: f64,
    pub x0_index: usize,
    pub seed: u64,
    index: Option<SpatialIndex>,
}

/// JSON sidecar written next to the cloud CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudMetadata {
    pub manifold: ManifoldKind,
    pub n: usize,
    pub seed: u64,
    pub nominal_h: f64,
    pub fill_distance: f64,
    pub x0_index: usize,
}

/// Generator spacing parameter: 1/n, 1/√n and √(4π/n).
pub fn nominal_spacing(kind: ManifoldKind, n: usize) -> f64 {
    let n = n as f64;
    match kind {
        ManifoldKind::Circle1 => 1.0 / n,
        ManifoldKind::FlatTorus2 => 1.0 / n.sqrt(),
        ManifoldKind::Sphere2 => (4.0 * PI / n).sqrt(),
    }
}

fn canonical_pin(kind: ManifoldKind) -> ManifoldPoint {
    match kind {
        ManifoldKind::Circle1 => ManifoldPoint::Circle(0.0),
        ManifoldKind::FlatTorus2 => ManifoldPoint::Torus([0.0, 0.0]),
        ManifoldKind::Sphere2 => ManifoldPoint::Sphere([1.0, 0.0, 0.0]),
    }
}

fn perfect_square_root(n: usize) -> Option<usize> {
    let m = (n as f64).sqrt().round() as usize;
    (m * m == n).then_some(m)
}

/// Deterministic grid (tori) or Fibonacci spiral (sphere).
pub fn generate_cloud(m: Manifold, n: usize, seed: u64) -> Result<PointCloud> {
    if n < 8 {
        return invalid(format!("cloud needs at least 8 nodes, got {n}"));
    }
    let points = match m.kind {
        ManifoldKind::Circle1 => (0..n).map(|i| ManifoldPoint::Circle(i as f64 / n as f64)).collect(),
        ManifoldKind::FlatTorus2 => {
            let Some(side) = perfect_square_root(n) else {
                return invalid(format!("torus grid needs a perfect square, got {n}"));
            };
            let s = side as f64;
            let mut pts = Vec::with_capacity(n);
            for i in 0..side {
                for j in 0..side {
                    pts.push(ManifoldPoint::Torus([i as f64 / s, j as f64 / s]));
                }
            }
            pts
        }
        ManifoldKind::Sphere2 => fibonacci_sphere(n, seed),
    };
    PointCloud::from_points(m, points, nominal_spacing(m.kind, n), seed)
}

fn fibonacci_sphere(n: usize, seed: u64) -> Vec<ManifoldPoint> {
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    let shift = if seed == 0 { 0.0 } else { ChaCha8Rng::seed_from_u64(seed).gen::<f64>() };
    (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = 2.0 * PI * ((i as f64 / golden + shift) % 1.0);
            let (s, c) = phi.sin_cos();
            ManifoldPoint::Sphere([rho * c, rho * s, z])
        })
        .collect()
}

/// Radical inverse of `i` in base `b`.
fn halton(mut i: usize, b: usize) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

/// Low-discrepancy probe `k` of `count` covering the manifold.
fn probe_point(kind: ManifoldKind, k: usize, count: usize) -> ManifoldPoint {
    match kind {
        ManifoldKind::Circle1 => ManifoldPoint::Circle((k as f64 + 0.5) / count as f64),
        ManifoldKind::FlatTorus2 => ManifoldPoint::Torus([halton(k + 1, 2), halton(k + 1, 3)]),
        ManifoldKind::Sphere2 => {
            let z = 1.0 - 2.0 * halton(k + 1, 2);
            let phi = 2.0 * PI * halton(k + 1, 3);
            let rho = (1.0 - z * z).max(0.0).sqrt();
            ManifoldPoint::Sphere([rho * phi.cos(), rho * phi.sin(), z])
        }
    }
}

impl PointCloud {
    /// Wraps arbitrary nodes; the pin is the node nearest the canonical point
    /// and the fill distance is estimated with the default probe count.
    pub fn from_points(
        manifold: Manifold,
        points: Vec<ManifoldPoint>,
        nominal_h: f64,
        seed: u64,
    ) -> Result<PointCloud> {
        if points.is_empty() {
            return invalid("empty point cloud");
        }
        for p in &points {
            manifold.check(p)?;
        }
        let index = (points.len() >= BRUTE_FORCE_LIMIT).then(|| SpatialIndex::build(manifold.kind, &points));
        let mut cloud = PointCloud { manifold, points, nominal_h, fill_distance: 0.0, x0_index: 0, seed, index };
        cloud.x0_index = cloud.nearest(&canonical_pin(manifold.kind)).0;
        cloud.fill_distance = cloud.estimate_fill_distance((PROBES_PER_NODE * cloud.len()).max(MIN_PROBES));
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn x0(&self) -> &ManifoldPoint {
        &self.points[self.x0_index]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        distance_unchecked(&self.points[i], &self.points[j])
    }

    pub fn distance_to_x0(&self, i: usize) -> f64 {
        self.distance(self.x0_index, i)
    }

    /// Sup over `probe_count` low-discrepancy probes of the distance to the
    /// nearest node. Should be at least ten probes per node.
    pub fn estimate_fill_distance(&self, probe_count: usize) -> f64 {
        let count = probe_count.max(1);
        (0..count).map(|k| self.nearest(&probe_point(self.manifold.kind, k, count)).1).fold(0.0, f64::max)
    }

    /// Nearest node to an arbitrary point, ties to the lower index.
    pub fn nearest(&self, p: &ManifoldPoint) -> (usize, f64) {
        if self.index.is_some() {
            let mut r = 2.0 * self.nominal_h.max(1e-12);
            while r < self.manifold.diameter() {
                if let Some(&best) = self.within_point(p, r).first() {
                    return best;
                }
                r *= 2.0;
            }
        }
        self.points
            .iter()
            .enumerate()
            .map(|(i, q)| (i, distance_unchecked(p, q)))
            .fold((0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
    }

    /// Nodes strictly closer than `radius` to `p`, as (index, distance),
    /// sorted by distance then index.
    pub fn within_point(&self, p: &ManifoldPoint, radius: f64) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = match &self.index {
            Some(idx) => idx
                .candidates(p, radius)
                .into_iter()
                .map(|i| (i, distance_unchecked(p, &self.points[i])))
                .filter(|&(_, d)| d < radius)
                .collect(),
            None => self
                .points
                .iter()
                .enumerate()
                .map(|(i, q)| (i, distance_unchecked(p, q)))
                .filter(|&(_, d)| d < radius)
                .collect(),
        };
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    /// Indices within `radius` of node `center_index`, center first.
    pub fn neighbors_within(&self, center_index: usize, radius: f64) -> Vec<usize> {
        let mut v: Vec<usize> =
            self.within_point(&self.points[center_index], radius).into_iter().map(|(i, _)| i).collect();
        if let Some(pos) = v.iter().position(|&i| i == center_index) {
            v.remove(pos);
        }
        v.insert(0, center_index);
        v
    }

    pub fn metadata(&self) -> CloudMetadata {
        CloudMetadata {
            manifold: self.manifold.kind,
            n: self.len(),
            seed: self.seed,
            nominal_h: self.nominal_h,
            fill_distance: self.fill_distance,
            x0_index: self.x0_index,
        }
    }

    /// CSV with header `index,c0,c1,c2`; unused coordinates are blank.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,c0,c1,c2\n");
        for (i, p) in self.points.iter().enumerate() {
            let c = p.coords();
            let field = |k: usize| c.get(k).map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{}", i, field(0), field(1), field(2));
        }
        s
    }

    pub fn write(&self, csv_path: &Path, json_path: &Path) -> Result<()> {
        std::fs::write(csv_path, self.to_csv())?;
        std::fs::write(json_path, serde_json::to_string_pretty(&self.metadata())? + "\n")?;
        Ok(())
    }

    /// Reads a cloud written by [`PointCloud::write`], keeping the stored
    /// fill distance and pin.
    pub fn read(csv_path: &Path, json_path: &Path) -> Result<PointCloud> {
        let meta: CloudMetadata = serde_json::from_str(&std::fs::read_to_string(json_path)?)?;
        let text = std::fs::read_to_string(csv_path)?;
        let mut points = Vec::with_capacity(meta.n);
        for (line_no, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let coords: Vec<f64> = line
                .split(',')
                .skip(1)
                .filter(|f| !f.is_empty())
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| crate::Error::InvalidInput(format!("line {}: {e}", line_no + 1)))?;
            let p = match (meta.manifold, coords.as_slice()) {
                (ManifoldKind::Circle1, [x]) => ManifoldPoint::Circle(*x),
                (ManifoldKind::FlatTorus2, [x, y]) => ManifoldPoint::Torus([*x, *y]),
                (ManifoldKind::Sphere2, [x, y, z]) => ManifoldPoint::Sphere([*x, *y, *z]),
                _ => return invalid(format!("line {}: wrong coordinate count", line_no + 1)),
            };
            points.push(p);
        }
        if points.len() != meta.n || meta.x0_index >= meta.n {
            return invalid("cloud CSV does not match its metadata");
        }
        let manifold = Manifold::new(meta.manifold);
        for p in &points {
            manifold.check(p)?;
        }
        let index = (points.len() >= BRUTE_FORCE_LIMIT).then(|| SpatialIndex::build(meta.manifold, &points));
        Ok(PointCloud {
            manifold,
            points,
            nominal_h: meta.nominal_h,
            fill_distance: meta.fill_distance,
            x0_index: meta.x0_index,
            seed: meta.seed,
            index,
        })
    }
}

/// Candidate generators for radius queries on large clouds. Candidates are
/// a superset of the true answer and are filtered by exact distance.
#[derive(Debug, Clone)]
enum SpatialIndex {
    /// Sorted (coordinate, index) pairs on the circle.
    Sorted(Vec<(f64, usize)>),
    /// Uniform cell grid on the torus.
    Cells { side: usize, cells: Vec<Vec<usize>> },
    /// Colatitude bands on the sphere, each sorted by longitude.
    Bands { width: f64, bands: Vec<Vec<(f64, usize)>> },
}

fn colatitude_longitude(p: &[f64; 3]) -> (f64, f64) {
    (p[2].clamp(-1.0, 1.0).acos(), p[1].atan2(p[0]))
}

/// Entries of a list sorted by key whose key lies in [lo, hi] on a circle of
/// the given period, with keys in [-period/2, period/2) or [0, period).
fn periodic_window<'a>(
    sorted: &'a [(f64, usize)],
    center: f64,
    half: f64,
    period: f64,
) -> Box<dyn Iterator<Item = usize> + 'a> {
    if 2.0 * half >= period {
        return Box::new(sorted.iter().map(|e| e.1));
    }
    let range = |lo: f64, hi: f64| {
        let a = sorted.partition_point(|e| e.0 < lo);
        let b = sorted.partition_point(|e| e.0 <= hi);
        sorted[a..b.max(a)].iter().map(|e| e.1)
    };
    let (lo, hi) = (center - half, center + half);
    Box::new(range(lo, hi).chain(range(lo + period, hi + period)).chain(range(lo - period, hi - period)))
}

impl SpatialIndex {
    fn build(kind: ManifoldKind, points: &[ManifoldPoint]) -> SpatialIndex {
        let n = points.len();
        match kind {
            ManifoldKind::Circle1 => {
                let mut v: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| (p.coords()[0], i)).collect();
                v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                SpatialIndex::Sorted(v)
            }
            ManifoldKind::FlatTorus2 => {
                let side = ((n as f64).sqrt() / 2.0).floor().max(1.0) as usize;
                let mut cells = vec![Vec::new(); side * side];
                for (i, p) in points.iter().enumerate() {
                    let c = p.coords();
                    let cx = ((c[0] * side as f64) as usize).min(side - 1);
                    let cy = ((c[1] * side as f64) as usize).min(side - 1);
                    cells[cx * side + cy].push(i);
                }
                SpatialIndex::Cells { side, cells }
            }
            ManifoldKind::Sphere2 => {
                let spacing = (4.0 * PI / n as f64).sqrt();
                let count = (PI / (2.0 * spacing)).floor().max(1.0) as usize;
                let width = PI / count as f64;
                let mut bands = vec![Vec::new(); count];
                for (i, p) in points.iter().enumerate() {
                    let ManifoldPoint::Sphere(c) = p else { unreachable!() };
                    let (theta, phi) = colatitude_longitude(c);
                    let b = ((theta / width) as usize).min(count - 1);
                    bands[b].push((phi, i));
                }
                for b in &mut bands {
                    b.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                }
                SpatialIndex::Bands { width, bands }
            }
        }
    }

    fn candidates(&self, p: &ManifoldPoint, radius: f64) -> Vec<usize> {
        // A little slack so boundary points are never lost to rounding.
        let r = radius + 1e-12;
        match (self, p) {
            (SpatialIndex::Sorted(v), ManifoldPoint::Circle(x)) => periodic_window(v, *x, r, 1.0).collect(),
            (SpatialIndex::Cells { side, cells }, ManifoldPoint::Torus(c)) => {
                let s = *side as f64;
                let reach = (r * s).ceil() as isize;
                let span = (2 * reach + 1).min(*side as isize);
                let cx = (c[0] * s) as isize;
                let cy = (c[1] * s) as isize;
                let (x0, y0) = if span == *side as isize { (0, 0) } else { (cx - reach, cy - reach) };
                let mut out = Vec::new();
                for dx in 0..span {
                    for dy in 0..span {
                        let ix = (x0 + dx).rem_euclid(*side as isize) as usize;
                        let iy = (y0 + dy).rem_euclid(*side as isize) as usize;
                        out.extend_from_slice(&cells[ix * side + iy]);
                    }
                }
                out
            }
            (SpatialIndex::Bands { width, bands }, ManifoldPoint::Sphere(c)) => {
                let (theta, phi) = colatitude_longitude(c);
                let mut out = Vec::new();
                for (b, band) in bands.iter().enumerate() {
                    let (t0, t1) = (b as f64 * width, (b + 1) as f64 * width);
                    if t1 < theta - r || t0 > theta + r {
                        continue;
                    }
                    // Along the band, |Δφ| ≤ asin(sin r / sin θ) for any point
                    // within r, as long as r < θ on both sides of the poles.
                    let s = t0.sin().min(t1.sin());
                    let half = if r >= PI / 2.0 || r.sin() >= s { PI } else { (r.sin() / s).asin() + 1e-12 };
                    out.extend(periodic_window(band, phi, half, 2.0 * PI));
                }
                out
            }
            _ => Vec::new(),
        }
    }
}
