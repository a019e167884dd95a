mod common;

use std::f64::consts::PI;

use morphflow::flow::{
    endpoint_jacobians, extrapolate, integrate, integrate_field, measure_region_volume, mesh_volume, BasisField,
    FlowConfig, VelocityField,
};
use morphflow::{DeformationBasis, Error, Mesh, PointCloud};

use common::{dist, icosphere, scale_to_displacement};

/// Solid-body rotation about the vertical axis through the domain center.
struct Spin(f64);

impl VelocityField<f64> for Spin {
    fn dim(&self) -> usize {
        3
    }

    fn velocity(&self, x: &[f64], out: &mut [f64]) {
        out[0] = -self.0 * (x[1] - 0.5);
        out[1] = self.0 * (x[0] - 0.5);
        out[2] = 0.0;
    }
}

#[test]
fn rk2_error_is_second_order() {
    let spin = Spin(PI);
    let x = PointCloud::from_points(3, &[[0.8, 0.5, 0.3]]).unwrap();
    let exact = [0.5 + 0.3 * PI.cos(), 0.5 + 0.3 * PI.sin(), 0.3];
    let errs: Vec<f64> = [8, 16, 32, 64]
        .iter()
        .map(|&t| {
            let end = integrate_field(&x, &spin, &FlowConfig::new(t).unwrap(), t).unwrap().endpoints();
            dist(end.point(0), &exact)
        })
        .collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.7..4.3).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn sphere_volume_is_conserved_under_a_basis_flow() {
    let basis = DeformationBasis::<f64>::with_default_exponent(3, 40).unwrap();
    let cfg = FlowConfig::new(20).unwrap();
    let coarse = icosphere(2, 0.25, [0.5; 3]);
    let a = scale_to_displacement(&coarse.cloud, &basis, &basis.sample_prior(3), &cfg, 0.05);
    let field = BasisField { basis: &basis, a: a.as_slice() };
    // The flow is volume preserving; what remains is the flat-face discretization of a curved surface.
    let drift = |level: usize, t: f64| {
        let region = icosphere(level, 0.25, [0.5; 3]);
        let v0 = mesh_volume(&region);
        (measure_region_volume(&region, &field, &cfg, t).unwrap() / v0 - 1.0).abs()
    };
    for t in [0.5, 1.0, 1.3] {
        let (d3, d5) = (drift(3, t), drift(5, t));
        assert!(d5 < 1e-3, "t={t}: drift {d5}");
        assert!(d5 < d3, "t={t}: refinement did not help ({d3} -> {d5})");
    }
}

#[test]
fn extrapolation_continues_the_same_trajectory() {
    let basis = DeformationBasis::<f64>::with_default_exponent(2, 12).unwrap();
    let a = basis.sample_prior(9);
    let x = PointCloud::from_points(2, &[[0.3, 0.3], [0.6, 0.7]]).unwrap();
    let cfg = FlowConfig::new(10).unwrap();
    let long = extrapolate(&x, &basis, &a, &cfg, 1.3).unwrap();
    assert_eq!(long.steps_taken(), 13);
    let one = integrate(&x, &basis, &a, &cfg).unwrap();
    assert_eq!(long.sample_time(1.0).unwrap(), one.endpoints());
    // Flowing the time-one endpoints for 0.3 more lands on the same points.
    let rest = integrate_field(&one.endpoints(), &BasisField { basis: &basis, a: a.as_slice() }, &cfg, 3).unwrap();
    assert_eq!(rest.last(), long.last());
    assert!(matches!(long.sample_time(1.4), Err(Error::OutOfHorizon { .. })));
    assert!(extrapolate(&x, &basis, &a, &cfg, 2.5).is_err());
}

#[test]
fn intermediate_times_interpolate_between_steps() {
    let basis = DeformationBasis::<f64>::with_default_exponent(2, 5).unwrap();
    let a = basis.sample_prior(1);
    let x = PointCloud::from_points(2, &[[0.4, 0.45]]).unwrap();
    let bundle = integrate(&x, &basis, &a, &FlowConfig::new(4).unwrap()).unwrap();
    let mid = bundle.sample_time(0.375).unwrap();
    let (p, q) = (bundle.position(0, 1), bundle.position(0, 2));
    for d in 0..2 {
        assert!((mid.point(0)[d] - 0.5 * (p[d] + q[d])).abs() < 1e-15);
    }
    assert_eq!(bundle.sample_time(0.0).unwrap(), x);
}

#[test]
fn jacobian_of_zero_field_with_one_step_is_the_basis_matrix() {
    let basis = DeformationBasis::<f64>::with_default_exponent(3, 9).unwrap();
    let x = PointCloud::from_points(3, &[[0.2, 0.7, 0.4]]).unwrap();
    let jac = endpoint_jacobians(&x, &basis, &morphflow::CoefficientVector::zeros(9), &FlowConfig::new(1).unwrap()).unwrap();
    for (k, e) in basis.entries().iter().enumerate() {
        let v = morphflow::basis::basis_field(3, &e.mode, x.point(0));
        for d in 0..3 {
            assert!((jac.row(0, d)[k] - v[d]).abs() < 1e-14);
        }
    }
}

#[test]
fn tetrahedron_volume_is_orientation_free() {
    let c = PointCloud::<f64>::from_points(3, &[[0.0; 3], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]]).unwrap();
    let outward = Mesh::new(c.clone(), vec![vec![0, 2, 1], vec![0, 1, 3], vec![0, 3, 2], vec![1, 2, 3]]).unwrap();
    let inward = Mesh::new(c, vec![vec![0, 1, 2], vec![0, 3, 1], vec![0, 2, 3], vec![1, 3, 2]]).unwrap();
    assert!((mesh_volume(&outward) - 8.0 / 6.0).abs() < 1e-14);
    assert_eq!(mesh_volume(&outward), mesh_volume(&inward));
}
