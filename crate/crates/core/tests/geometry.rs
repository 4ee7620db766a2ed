use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use safepriv::geometry::{
    apply_scaling, build_simplex, max_shrinkage, max_shrinkage_bisection, project, sharpness,
    shrink, Polytope, ScalingTransform, SimplexSpec,
};

/// Convex polygon whose vertices lie on a random rotated ellipse.
fn random_polygon(rng: &mut ChaCha8Rng, n: usize) -> (Polytope, Vec<[f64; 2]>) {
    let (ax, ay) = (rng.random_range(0.5..2.0), rng.random_range(0.5..2.0));
    let rot: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (cx, cy) = (rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
    let mut angles: Vec<f64> = Vec::new();
    // Gaps below pi keep the center inside.
    while angles.len() < n {
        let base = std::f64::consts::TAU * angles.len() as f64 / n as f64;
        angles.push(base + rng.random_range(-0.3..0.3) / n as f64);
    }
    let verts: Vec<[f64; 2]> = angles
        .iter()
        .map(|t| {
            let (x, y) = (ax * t.cos(), ay * t.sin());
            [
                cx + rot.cos() * x - rot.sin() * y,
                cy + rot.sin() * x + rot.cos() * y,
            ]
        })
        .collect();
    let mut rows = Vec::new();
    let mut b = Vec::new();
    for i in 0..n {
        let p = verts[i];
        let q = verts[(i + 1) % n];
        let mut a = [q[1] - p[1], p[0] - q[0]];
        let mut off = a[0] * p[0] + a[1] * p[1];
        let inner = verts[(i + 2) % n];
        if a[0] * inner[0] + a[1] * inner[1] > off {
            a = [-a[0], -a[1]];
            off = -off;
        }
        rows.push(a.to_vec());
        b.push(off);
    }
    (Polytope::from_rows(&rows, &b).unwrap(), verts)
}

fn bounding_box(verts: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for v in verts {
        for k in 0..2 {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    (lo, hi)
}

fn point(x: f64, y: f64) -> DVector<f64> {
    DVector::from_vec(vec![x, y])
}

#[test]
fn scaling_preserves_membership() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (poly, verts) = random_polygon(&mut rng, 3);
    let beta = ScalingTransform::new(vec![rng.random_range(0.2..5.0), rng.random_range(0.2..5.0)])
        .unwrap();
    let scaled = apply_scaling(&poly, &beta).unwrap();
    let (lo, hi) = bounding_box(&verts);
    let mut inside = 0;
    let mut checked = 0;
    for _ in 0..10_000 {
        let x = point(
            rng.random_range(lo[0] - 0.5..hi[0] + 0.5),
            rng.random_range(lo[1] - 0.5..hi[1] + 0.5),
        );
        let bx = beta.forward(&x);
        let near = poly.slacks(&x).amin().abs() < 1e-9 || scaled.slacks(&bx).amin().abs() < 1e-9;
        if near {
            continue;
        }
        checked += 1;
        let a = poly.contains(&x, 0.0);
        assert_eq!(a, scaled.contains(&bx, 0.0), "x = {x:?}");
        inside += a as usize;
    }
    assert!(checked > 9_900);
    assert!(inside > 1_000 && inside < checked);

    let back = apply_scaling(&scaled, &beta.inverse()).unwrap();
    assert!((back.a() - poly.a()).amax() <= 1e-15 * poly.a().amax());
    assert_eq!(back.b(), poly.b());
}

#[test]
fn projection_matches_boundary_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5 {
        let (poly, verts) = random_polygon(&mut rng, 3);
        let n = 100_000;
        let boundary: Vec<[f64; 2]> = (0..3)
            .flat_map(|i| {
                let p = verts[i];
                let q = verts[(i + 1) % 3];
                (0..=n).map(move |k| {
                    let s = k as f64 / n as f64;
                    [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]
                })
            })
            .collect();
        let mut done = 0;
        while done < 4 {
            let x = point(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            if poly.contains(&x, 0.0) {
                continue;
            }
            done += 1;
            let pr = project(&x, &poly).unwrap();
            let nearest = boundary
                .iter()
                .min_by(|u, v| {
                    let du = (u[0] - x[0]).powi(2) + (u[1] - x[1]).powi(2);
                    let dv = (v[0] - x[0]).powi(2) + (v[1] - x[1]).powi(2);
                    du.total_cmp(&dv)
                })
                .unwrap();
            let err = ((pr.point[0] - nearest[0]).powi(2) + (pr.point[1] - nearest[1]).powi(2)).sqrt();
            assert!(err < 1e-4, "projection off by {err}");
            assert!(pr.kkt_residual(&x, &poly) <= 1e-8);
        }
    }
}

#[test]
fn bisection_matches_grid_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for n in [3, 5, 7] {
        let (poly, verts) = random_polygon(&mut rng, n);
        let h = max_shrinkage_bisection(&poly).unwrap();
        let (lo, hi) = bounding_box(&verts);
        let norms = poly.row_l1_norms();
        let step = 1e-3;
        let mut grid = f64::NEG_INFINITY;
        let mut x = lo[0];
        while x <= hi[0] {
            let mut y = lo[1];
            while y <= hi[1] {
                let mut depth = f64::INFINITY;
                for j in 0..poly.n_rows() {
                    let s = poly.b()[j] - poly.a()[(j, 0)] * x - poly.a()[(j, 1)] * y;
                    depth = depth.min(s / norms[j]);
                }
                grid = grid.max(depth);
                y += step;
            }
            x += step;
        }
        assert!((h - grid).abs() <= 1e-3, "n = {n}: bisection {h}, grid {grid}");
        assert!(grid <= h + 1e-9);
    }
}

#[test]
fn empty_exactly_beyond_max_shrinkage() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for n in [3, 4, 6] {
        let (poly, _) = random_polygon(&mut rng, n);
        let h = max_shrinkage(&poly).unwrap();
        assert!(!shrink(&poly, h - 1e-7).unwrap().is_empty().unwrap());
        assert!(shrink(&poly, h + 1e-7).unwrap().is_empty().unwrap());
    }
    let simplex = build_simplex(&SimplexSpec::new(vec![0.7, 1.9, 0.3]).unwrap());
    let h = max_shrinkage(&simplex).unwrap();
    assert!(!shrink(&simplex, h - 1e-7).unwrap().is_empty().unwrap());
    assert!(shrink(&simplex, h + 1e-7).unwrap().is_empty().unwrap());
}

#[test]
fn shrunk_sets_are_nested() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let (poly, verts) = random_polygon(&mut rng, 5);
    let h = max_shrinkage(&poly).unwrap();
    let (d1, d2) = (0.2 * h, 0.6 * h);
    let outer = shrink(&poly, d1).unwrap();
    let inner = shrink(&poly, d2).unwrap();
    let (lo, hi) = bounding_box(&verts);
    let mut samples = 0;
    while samples < 10_000 {
        let x = point(rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1]));
        if inner.contains(&x, 0.0) {
            samples += 1;
            assert!(outer.contains(&x, 0.0));
            assert!(poly.contains(&x, 0.0));
        }
    }
}

/// Vertices of a 2-D polytope from all pairwise line intersections.
fn polygon_vertices(poly: &Polytope) -> Vec<[f64; 2]> {
    let (a, b) = (poly.a(), poly.b());
    let mut out: Vec<[f64; 2]> = Vec::new();
    for i in 0..poly.n_rows() {
        for j in i + 1..poly.n_rows() {
            let det = a[(i, 0)] * a[(j, 1)] - a[(i, 1)] * a[(j, 0)];
            if det.abs() < 1e-14 {
                continue;
            }
            let x = (b[i] * a[(j, 1)] - b[j] * a[(i, 1)]) / det;
            let y = (a[(i, 0)] * b[j] - a[(j, 0)] * b[i]) / det;
            if poly.contains(&point(x, y), 1e-12) {
                out.push([x, y]);
            }
        }
    }
    let cx = out.iter().map(|v| v[0]).sum::<f64>() / out.len() as f64;
    let cy = out.iter().map(|v| v[1]).sum::<f64>() / out.len() as f64;
    out.sort_by(|u, v| (u[1] - cy).atan2(u[0] - cx).total_cmp(&(v[1] - cy).atan2(v[0] - cx)));
    out
}

fn segment_distance(p: [f64; 2], u: [f64; 2], v: [f64; 2]) -> f64 {
    let d = [v[0] - u[0], v[1] - u[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let s = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - u[0]) * d[0] + (p[1] - u[1]) * d[1]) / len2).clamp(0.0, 1.0)
    };
    ((p[0] - u[0] - s * d[0]).powi(2) + (p[1] - u[1] - s * d[1]).powi(2)).sqrt()
}

#[test]
fn polygon_sharpness_matches_segment_distances() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for n in [3, 4, 5, 8] {
        let (poly, verts) = random_polygon(&mut rng, n);
        let h = max_shrinkage(&poly).unwrap();
        for frac in [0.1, 0.5, 0.9] {
            let delta = frac * h;
            let shrunk = polygon_vertices(&shrink(&poly, delta).unwrap());
            let k = shrunk.len();
            let oracle = verts
                .iter()
                .map(|&p| {
                    (0..k)
                        .map(|i| segment_distance(p, shrunk[i], shrunk[(i + 1) % k]))
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max);
            let got = sharpness(&poly, delta).unwrap();
            assert!((got - oracle).abs() <= 1e-6, "n = {n}, Δ = {delta}: {got} vs {oracle}");
        }
    }
}

#[test]
fn experiment_simplex_file_values() {
    let poly = build_simplex(&SimplexSpec::new(vec![1.0, 0.25, 0.5]).unwrap());
    let expected = DMatrix::from_row_slice(
        4,
        3,
        &[1.0, 4.0, 2.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0],
    );
    assert_eq!(poly.a(), &expected);
    let scaled = apply_scaling(&poly, &ScalingTransform::new(vec![2.0; 3]).unwrap()).unwrap();
    assert_eq!(scaled.a(), &(expected * 2.0));
    assert_eq!(scaled.b(), poly.b());
}

fn simplex_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (2usize..=4).prop_flat_map(|m| {
        (
            prop::collection::vec(0.1f64..3.0, m),
            prop::collection::vec(0.2f64..5.0, m),
            0.01f64..0.5,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simplex_sharpness_is_linear_in_delta((c, beta, frac) in simplex_strategy()) {
        let poly = build_simplex(&SimplexSpec::new(c).unwrap());
        let scaled = apply_scaling(&poly, &ScalingTransform::new(beta).unwrap()).unwrap();
        let delta = frac * max_shrinkage(&scaled).unwrap();
        let one = sharpness(&scaled, delta).unwrap();
        let two = sharpness(&scaled, 2.0 * delta).unwrap();
        prop_assert!((two - 2.0 * one).abs() <= 1e-9);
    }

    #[test]
    fn simplex_sharpness_lower_bound((c, beta, frac) in simplex_strategy()) {
        let m = c.len() as f64;
        let floor = ((m - 1.0) + (2.0 * m - 1.0).powi(2)).sqrt();
        let poly = build_simplex(&SimplexSpec::new(c.clone()).unwrap());
        let scaled = apply_scaling(&poly, &ScalingTransform::new(beta).unwrap()).unwrap();
        let delta = frac * max_shrinkage(&scaled).unwrap();
        prop_assert!(sharpness(&scaled, delta).unwrap() / delta >= floor - 1e-9);

        // Equal ρ_m = c_m/β_m attains the floor.
        let k = 1.7;
        let even = ScalingTransform::new(c.iter().map(|v| v * k).collect()).unwrap();
        let even = apply_scaling(&poly, &even).unwrap();
        let delta = frac * max_shrinkage(&even).unwrap();
        let ratio = sharpness(&even, delta).unwrap() / delta;
        prop_assert!((ratio - floor).abs() <= 1e-9 * floor);
    }
}
