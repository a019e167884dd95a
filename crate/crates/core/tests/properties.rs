mod common;

use morphflow::basis::basis_field;
use morphflow::domain::{farthest_point_sample, fit_domain};
use morphflow::em::{e_step_untruncated, huber};
use morphflow::eval::{geodesic_distance, surface_distance};
use morphflow::flow::{integrate, polygon_area};
use morphflow::{CoefficientVector, DeformationBasis, DistanceModel, FlowConfig, GeodesicIndex, Mesh, PointCloud};
use proptest::prelude::*;

use common::{circle_polygon, dist, scale_to_displacement};

fn cloud(dim: usize, range: std::ops::Range<f64>, n: std::ops::Range<usize>) -> impl Strategy<Value = PointCloud<f64>> {
    prop::collection::vec(prop::collection::vec(range, dim), n)
        .prop_map(move |pts| PointCloud::from_points(dim, &pts).unwrap())
}

fn unit_point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, dim)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn responsibilities_and_outliers_sum_to_one(
        f in cloud(3, 0.0..1.0, 1..20),
        y in cloud(3, 0.0..1.0, 1..20),
        sigma2 in 1e-4..1.0f64,
    ) {
        let w = e_step_untruncated(&DistanceModel::euclidean(f.len(), y.len()), &f, &y, sigma2);
        for t in w.column_totals() {
            prop_assert!((t - 1.0).abs() < 1e-12);
        }
        prop_assert!(w.w.iter().chain(&w.outlier_mass).all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn huber_is_continuous_and_even(r0 in 1e-4..1.0f64, r in -2.0..2.0f64) {
        let eps = 1e-9;
        prop_assert!((huber(r0 + eps, r0) - huber(r0 - eps, r0)).abs() < 2.0 * r0 * eps + 1e-15);
        prop_assert_eq!(huber(r, r0), huber(-r, r0));
        prop_assert!(huber(r, r0) <= 0.5 * r * r + 1e-15);
        prop_assert!(huber(r, r0) >= 0.0);
    }

    #[test]
    fn farthest_point_sampling_is_deterministic_and_distinct(
        c in cloud(3, -1.0..1.0, 2..60),
        frac in 0.0..1.0f64,
        seed in 0usize..1000,
    ) {
        let k = 1 + ((c.len() - 1) as f64 * frac) as usize;
        let seed = seed % c.len();
        let a = farthest_point_sample(&c, k, seed).unwrap();
        prop_assert_eq!(&a, &farthest_point_sample(&c, k, seed).unwrap());
        let mut sorted = a.indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), k);
        let b = farthest_point_sample(&c, (k + 1).min(c.len()), seed).unwrap();
        prop_assert_eq!(&b.indices[..k], &a.indices[..]);
    }

    #[test]
    fn fitted_domain_holds_both_clouds(
        x in cloud(3, -50.0..50.0, 1..30),
        y in cloud(3, -5.0..80.0, 1..30),
        margin in 0.01..0.45f64,
    ) {
        let t = fit_domain(&x, &y, margin).unwrap();
        for p in t.apply(&x).points().chain(t.apply(&y).points()) {
            for &v in p {
                prop_assert!(v >= margin - 1e-9 && v <= 1.0 - margin + 1e-9);
            }
        }
        let back = t.apply_inverse(&t.apply(&x));
        for (p, q) in back.coords().iter().zip(x.coords()) {
            prop_assert!((p - q).abs() < 1e-9 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn fields_are_linear_and_tangent_to_the_boundary(
        a in prop::collection::vec(-1.0..1.0f64, 12),
        b in prop::collection::vec(-1.0..1.0f64, 12),
        alpha in -3.0..3.0f64,
        x in unit_point(3),
        face in 0usize..3,
    ) {
        let basis = DeformationBasis::<f64>::with_default_exponent(3, 12).unwrap();
        let combo: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p + alpha * q).collect();
        let (a, b, combo) = (
            CoefficientVector::new(a).unwrap(),
            CoefficientVector::new(b).unwrap(),
            CoefficientVector::new(combo).unwrap(),
        );
        let (va, vb, vc) = (
            basis.evaluate_field(&a, &x).unwrap(),
            basis.evaluate_field(&b, &x).unwrap(),
            basis.evaluate_field(&combo, &x).unwrap(),
        );
        for d in 0..3 {
            prop_assert!((vc[d] - va[d] - alpha * vb[d]).abs() < 1e-10);
        }
        let mut on_face = x.clone();
        on_face[face] = 0.0;
        for e in basis.entries() {
            prop_assert!(basis_field(3, &e.mode, &on_face)[face].abs() < 1e-12);
        }
    }

    #[test]
    fn geodesic_distance_is_symmetric(
        pts in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 3), 6),
        u in 0usize..6,
        v in 0usize..6,
    ) {
        let faces = vec![vec![0, 1, 2], vec![1, 2, 3], vec![2, 3, 4], vec![3, 4, 5]];
        let mesh = Mesh::new(PointCloud::from_points(3, &pts).unwrap(), faces).unwrap();
        let index = GeodesicIndex::new(&mesh).unwrap();
        let (duv, dvu) = (geodesic_distance(&index, u, v).unwrap(), geodesic_distance(&index, v, u).unwrap());
        prop_assert!((duv - dvu).abs() < 1e-12);
        prop_assert!(duv >= dist(&pts[u], &pts[v]) - 1e-12);
    }

    #[test]
    fn surface_distance_average_never_exceeds_maximum(
        probe in cloud(3, -1.0..1.0, 1..40),
        tri in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 3), 4),
    ) {
        let mesh = Mesh::new(PointCloud::from_points(3, &tri).unwrap(), vec![vec![0, 1, 2], vec![0, 2, 3]]).unwrap();
        let r = surface_distance(&probe, &mesh).unwrap();
        prop_assert!(r.avg <= r.max + 1e-15);
        prop_assert!(r.per_point.iter().all(|&d| d >= 0.0 && d <= r.max));
        for (p, &d) in probe.points().zip(&r.per_point) {
            let nearest_vertex = tri.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min);
            prop_assert!(d <= nearest_vertex + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 10, ..ProptestConfig::default() })]

    #[test]
    fn flows_keep_points_inside_and_area_nearly_fixed(seed in 0u64..1000) {
        let basis = DeformationBasis::<f64>::with_default_exponent(2, 15).unwrap();
        let x = circle_polygon(200, 0.25, [0.5, 0.5]);
        let flow = FlowConfig::new(40).unwrap();
        let a = scale_to_displacement(&x, &basis, &basis.sample_prior(seed), &flow, 0.08);
        let end = integrate(&x, &basis, &a, &flow).unwrap().endpoints();
        prop_assert!(end.coords().iter().all(|&v| (-1e-9..=1.0 + 1e-9).contains(&v)));
        let (a0, a1) = (polygon_area(&x), polygon_area(&end));
        prop_assert!((a1 / a0 - 1.0).abs() < 0.01, "area {} -> {}", a0, a1);
    }
}
