use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use gfd::cloud::generate_cloud;
use gfd::gradient::{gradient_stencil_at, GradientSpec};
use gfd::scheme::{self, DiscreteSystem, GridFunction};
use gfd::solver::{self, SolveMethod, DEFAULT_TOL};
use gfd::stencil::{self, synthesize_all, SynthesisOptions};
use gfd::{Manifold, ManifoldPoint, OperatorSpec, PointCloud, TangentVector};

fn circle_system() -> &'static DiscreteSystem {
    static S: OnceLock<DiscreteSystem> = OnceLock::new();
    S.get_or_init(|| {
        let c = generate_cloud(Manifold::circle(), 64, 0).unwrap();
        let spec = OperatorSpec::laplacian(Arc::new(|_| 0.0), 1.0).unwrap();
        let st = stencil::closed_form_wide_1d(64).unwrap();
        scheme::assemble_proper(&st, &spec, &c, &scheme::circle_reproduction_weights(&c)).unwrap()
    })
}

fn sphere_cap_system() -> &'static DiscreteSystem {
    static S: OnceLock<DiscreteSystem> = OnceLock::new();
    S.get_or_init(|| {
        let c = generate_cloud(Manifold::sphere(), 200, 0).unwrap();
        let spec = OperatorSpec::laplacian(Arc::new(|_| 0.0), 1.0).unwrap();
        let st = synthesize_all(&c, &spec, &SynthesisOptions::default()).unwrap();
        scheme::assemble_cap_scheme(&st, &spec, &c, 0.3).unwrap()
    })
}

fn torus_cloud() -> &'static PointCloud {
    static C: OnceLock<PointCloud> = OnceLock::new();
    C.get_or_init(|| generate_cloud(Manifold::torus(), 1600, 3).unwrap())
}

fn ordered_gap(sys: &DiscreteSystem, lo: &[f64], bump: &[f64]) -> f64 {
    let hi: Vec<f64> = lo.iter().zip(bump).map(|(a, b)| a + b).collect();
    let u1 = solver::solve(&sys.operator, lo, SolveMethod::DirectDense, DEFAULT_TOL).unwrap().x;
    let u2 = solver::solve(&sys.operator, &hi, SolveMethod::DirectDense, DEFAULT_TOL).unwrap().x;
    u1.iter().zip(&u2).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max)
}

fn sphere_point() -> impl Strategy<Value = ManifoldPoint> {
    (-1.0f64..1.0, 0.0f64..std::f64::consts::TAU).prop_map(|(z, t)| {
        let s = (1.0 - z * z).sqrt();
        ManifoldPoint::sphere([s * t.cos(), s * t.sin(), z]).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn comparison_principle_circle(
        lo in prop::collection::vec(-1.0f64..1.0, 64),
        bump in prop::collection::vec(0.0f64..1.0, 64),
    ) {
        prop_assert!(ordered_gap(circle_system(), &lo, &bump) <= 1e-10);
    }

    #[test]
    fn comparison_principle_sphere_cap(
        lo in prop::collection::vec(-1.0f64..1.0, 200),
        bump in prop::collection::vec(0.0f64..1.0, 200),
    ) {
        prop_assert!(ordered_gap(sphere_cap_system(), &lo, &bump) <= 1e-10);
    }

    #[test]
    fn sphere_distance_is_a_metric(p in sphere_point(), q in sphere_point(), r in sphere_point()) {
        let m = Manifold::sphere();
        let d = |a: &ManifoldPoint, b: &ManifoldPoint| m.geodesic_distance(a, b).unwrap();
        prop_assert!(d(&p, &p).abs() <= 1e-7);
        prop_assert!((d(&p, &q) - d(&q, &p)).abs() <= 1e-12);
        prop_assert!(d(&p, &r) <= d(&p, &q) + d(&q, &r) + 1e-12);
        prop_assert!(d(&p, &q) <= std::f64::consts::PI + 1e-12);
    }

    #[test]
    fn torus_exp_inverts_log(x in 0.0f64..1.0, y in 0.0f64..1.0, dx in -0.49f64..0.49, dy in -0.49f64..0.49) {
        let m = Manifold::torus();
        let base = ManifoldPoint::torus(x, y);
        let p = m.exp_map(&TangentVector { base, components: vec![dx, dy] }).unwrap();
        let back = m.log_map(&base, &p).unwrap();
        prop_assert!((back.components[0] - dx).abs() <= 1e-12);
        prop_assert!((back.components[1] - dy).abs() <= 1e-12);
    }

    #[test]
    fn gradient_is_exact_on_affine_data(
        node in 0usize..1600,
        angle in 0.0f64..std::f64::consts::TAU,
        gx in -3.0f64..3.0,
        gy in -3.0f64..3.0,
        offset in -2.0f64..2.0,
    ) {
        let c = torus_cloud();
        let nu = vec![angle.cos(), angle.sin()];
        let spec = GradientSpec::new(0.5, 2.0, c.fill_distance, &c.manifold, nu.clone()).unwrap();
        let s = gradient_stencil_at(c, node, &spec).unwrap();
        prop_assert!(s.moment_residual <= 1e-10);
        let base = c.points[node];
        // Affine in the normal coordinates of the evaluation node; only the
        // stencil nodes are read.
        let mut values = vec![f64::NAN; c.len()];
        for &j in s.point_indices.iter().chain([&node]) {
            let v = c.manifold.log_map(&base, &c.points[j]).unwrap().components;
            values[j] = offset + gx * v[0] + gy * v[1];
        }
        let u = GridFunction { values };
        let want = gx * nu[0] + gy * nu[1];
        prop_assert!((s.apply(&u.values) - want).abs() <= 1e-8 * (1.0 + want.abs()));
    }
}
