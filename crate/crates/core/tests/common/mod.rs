#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::Path;

use morphflow::domain::ShapeFormat;
use morphflow::flow::{integrate, FlowConfig};
use morphflow::{CoefficientVector, DeformationBasis, Mesh, PointCloud};

/// Gauss-Legendre nodes and weights on `[0, 1]`, by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 1..=n {
        let mut x = (PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes.push(0.5 * (1.0 - x));
        weights.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

/// Tensor-product quadrature points and weights on `[0, 1]^dim`.
pub fn tensor_rule(n: usize, dim: usize) -> Vec<(Vec<f64>, f64)> {
    let (x, w) = gauss_legendre(n);
    let mut out = vec![(Vec::new(), 1.0)];
    for _ in 0..dim {
        let mut next = Vec::with_capacity(out.len() * n);
        for (p, pw) in &out {
            for (xi, wi) in x.iter().zip(&w) {
                let mut q = p.clone();
                q.push(*xi);
                next.push((q, pw * wi));
            }
        }
        out = next;
    }
    out
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Index and distance of the nearest target point, lowest index on ties.
pub fn nearest(p: &[f64], cloud: &PointCloud<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, q) in cloud.points().enumerate() {
        let d = dist(p, q);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Mean nearest-target distance and the fraction of points whose nearest target has their own index.
pub fn match_quality(f: &PointCloud<f64>, y: &PointCloud<f64>) -> (f64, f64) {
    let mut total = 0.0;
    let mut correct = 0;
    for (n, p) in f.points().enumerate() {
        let (m, d) = nearest(p, y);
        total += d;
        correct += usize::from(m == n);
    }
    (total / f.len() as f64, correct as f64 / f.len() as f64)
}

/// Points on a sphere by the golden-angle spiral.
pub fn fibonacci_sphere(n: usize, radius: f64, center: [f64; 3]) -> PointCloud<f64> {
    let golden = PI * (3.0 - 5f64.sqrt());
    let pts: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let t = golden * i as f64;
            [center[0] + radius * r * t.cos(), center[1] + radius * r * t.sin(), center[2] + radius * z]
        })
        .collect();
    PointCloud::from_points(3, &pts).unwrap()
}

/// Subdivided icosahedron projected to a sphere, outward oriented.
pub fn icosphere(level: usize, radius: f64, center: [f64; 3]) -> Mesh<f64> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0], [1.0, t, 0.0], [-1.0, -t, 0.0], [1.0, -t, 0.0],
        [0.0, -1.0, t], [0.0, 1.0, t], [0.0, -1.0, -t], [0.0, 1.0, -t],
        [t, 0.0, -1.0], [t, 0.0, 1.0], [-t, 0.0, -1.0], [-t, 0.0, 1.0],
    ];
    let mut f: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache = std::collections::HashMap::new();
        let mut mid = |a: usize, b: usize, v: &mut Vec<[f64; 3]>| {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                v.push([(v[a][0] + v[b][0]) / 2.0, (v[a][1] + v[b][1]) / 2.0, (v[a][2] + v[b][2]) / 2.0]);
                v.len() - 1
            })
        };
        let mut next = Vec::with_capacity(f.len() * 4);
        for [a, b, c] in f {
            let ab = mid(a, b, &mut v);
            let bc = mid(b, c, &mut v);
            let ca = mid(c, a, &mut v);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        f = next;
    }
    let pts: Vec<[f64; 3]> = v
        .iter()
        .map(|p| {
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            [center[0] + radius * p[0] / n, center[1] + radius * p[1] / n, center[2] + radius * p[2] / n]
        })
        .collect();
    Mesh::new(PointCloud::from_points(3, &pts).unwrap(), f.into_iter().map(|t| t.to_vec()).collect()).unwrap()
}

/// Open tube of `rings x segments` vertices around a centerline of length
/// `length`, bent into a circular arc of total angle `bend` (0 = straight).
pub fn tube(rings: usize, segments: usize, radius: f64, length: f64, bend: f64) -> Mesh<f64> {
    let mut pts = Vec::with_capacity(rings * segments);
    for i in 0..rings {
        let s = length * (i as f64 / (rings - 1) as f64 - 0.5);
        let (c, tangent) = if bend == 0.0 {
            ([s, 0.0, 0.0], [1.0, 0.0, 0.0])
        } else {
            let rc = length / bend;
            let alpha = s / rc;
            ([rc * alpha.sin(), rc * (1.0 - alpha.cos()), 0.0], [alpha.cos(), alpha.sin(), 0.0])
        };
        let normal = [-tangent[1], tangent[0], 0.0];
        for j in 0..segments {
            let phi = 2.0 * PI * j as f64 / segments as f64;
            let (cp, sp) = (phi.cos(), phi.sin());
            pts.push([c[0] + radius * cp * normal[0], c[1] + radius * cp * normal[1], c[2] + radius * sp]);
        }
    }
    let mut faces = Vec::new();
    for i in 0..rings - 1 {
        for j in 0..segments {
            let a = i * segments + j;
            let b = i * segments + (j + 1) % segments;
            let c = (i + 1) * segments + (j + 1) % segments;
            let d = (i + 1) * segments + j;
            faces.push(vec![a, b, c]);
            faces.push(vec![a, c, d]);
        }
    }
    Mesh::new(PointCloud::from_points(3, &pts).unwrap(), faces).unwrap()
}

/// Regular polygon with `n` vertices, counterclockwise.
pub fn circle_polygon(n: usize, radius: f64, center: [f64; 2]) -> PointCloud<f64> {
    let pts: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / n as f64;
            [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
        })
        .collect();
    PointCloud::from_points(2, &pts).unwrap()
}

pub fn max_displacement(x: &PointCloud<f64>, y: &PointCloud<f64>) -> f64 {
    x.points().zip(y.points()).map(|(p, q)| dist(p, q)).fold(0.0, f64::max)
}

/// Scales `a` so that the time-one flow moves no point of `x` farther than
/// `target`, by bisection on the scale factor.
pub fn scale_to_displacement(
    x: &PointCloud<f64>,
    basis: &DeformationBasis<f64>,
    a: &CoefficientVector<f64>,
    flow: &FlowConfig<f64>,
    target: f64,
) -> CoefficientVector<f64> {
    let reach = |s: f64| max_displacement(x, &integrate(x, basis, &a.scaled(s), flow).unwrap().endpoints());
    let (mut lo, mut hi) = (0.0, 1.0);
    while reach(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if reach(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    a.scaled(lo)
}

pub fn write_mesh(path: &Path, mesh: &Mesh<f64>) {
    morphflow::domain::write_shape(path, ShapeFormat::from_path(path).unwrap(), mesh).unwrap();
}

pub fn write_cloud(path: &Path, cloud: &PointCloud<f64>) {
    write_mesh(path, &Mesh::new(cloud.clone(), Vec::new()).unwrap());
}

/// Central difference of `f` along coordinate `k` of `a`.
pub fn central_difference(a: &[f64], k: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut p = a.to_vec();
    p[k] += h;
    let fp = f(&p);
    p[k] -= 2.0 * h;
    let fm = f(&p);
    (fp - fm) / (2.0 * h)
}
