//! Second-order Runge-Kutta integration of the stationary flow
//! `x' = v(x)` on the unit time interval, trajectory sampling and
//! extrapolation, coefficient Jacobians of the endpoints, and a
//! region-volume harness.
//!
//! One step is `x <- x + h v(x + h/2 v(x))` with `h = 1 / T`.

use rayon::prelude::*;

use crate::basis::{CoefficientVector, DeformationBasis};
use crate::domain::{Mesh, PointCloud};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Time discretization: `steps` intervals on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowConfig<T> {
    pub steps: usize,
    /// Upper bound accepted for extrapolation times.
    pub max_time: T,
}

impl<T: Real> FlowConfig<T> {
    pub fn new(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument("step count T must be positive".into()));
        }
        Ok(FlowConfig { steps, max_time: T::lit(2.0) })
    }

    #[inline]
    pub fn step_size(&self) -> T {
        T::one() / T::from_count(self.steps)
    }

    /// Number of steps needed to reach time `t`.
    pub fn steps_for(&self, t: T) -> usize {
        let s = t * T::from_count(self.steps);
        let r = s.round();
        // Treat values within rounding noise of an integer as that integer.
        let whole = if (s - r).abs() <= T::lit(1e-9) * r.max(T::one()) { r } else { s.ceil() };
        whole.as_f64() as usize
    }
}

impl<T: Real> Default for FlowConfig<T> {
    fn default() -> Self {
        FlowConfig { steps: 20, max_time: T::lit(2.0) }
    }
}

/// A stationary velocity field on `R^D`.
pub trait VelocityField<T: Real>: Sync {
    fn dim(&self) -> usize;

    /// Writes `v(x)` into `out[..dim]`.
    fn velocity(&self, x: &[T], out: &mut [T]);
}

/// `v(x) = sum_k a_k v_k(x)` for a basis and coefficient slice.
pub struct BasisField<'a, T> {
    pub basis: &'a DeformationBasis<T>,
    pub a: &'a [T],
}

impl<T: Real> VelocityField<T> for BasisField<'_, T> {
    fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn velocity(&self, x: &[T], out: &mut [T]) {
        let v = self.basis.sample(self.a, x, false).value;
        out[..self.basis.dim()].copy_from_slice(&v[..self.basis.dim()]);
    }
}

/// Positions of every point at every stored time step.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBundle<T> {
    dim: usize,
    n_points: usize,
    /// Number of steps taken; `stored = taken + 1` rows per point.
    taken: usize,
    /// `positions[(n * (taken + 1) + t) * dim + d]`.
    positions: Vec<T>,
    pub config: FlowConfig<T>,
    template: PointCloud<T>,
}

impl<T: Real> TrajectoryBundle<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    pub fn steps_taken(&self) -> usize {
        self.taken
    }

    /// Integrated time span `taken * h`.
    pub fn horizon(&self) -> T {
        T::from_count(self.taken) * self.config.step_size()
    }

    #[inline]
    pub fn position(&self, n: usize, t: usize) -> &[T] {
        let start = (n * (self.taken + 1) + t) * self.dim;
        &self.positions[start..start + self.dim]
    }

    /// Cloud at grid step `t`.
    pub fn at_step(&self, t: usize) -> PointCloud<T> {
        let mut coords = Vec::with_capacity(self.n_points * self.dim);
        for n in 0..self.n_points {
            coords.extend_from_slice(self.position(n, t));
        }
        self.template.with_coords(coords)
    }

    /// Positions at the configured unit time (`t = 1`), i.e. `f_n = x_n^(T)`.
    pub fn endpoints(&self) -> PointCloud<T> {
        self.at_step(self.config.steps.min(self.taken))
    }

    /// Positions at the last stored step.
    pub fn last(&self) -> PointCloud<T> {
        self.at_step(self.taken)
    }

    /// Cloud at time `t`: exact grid row when `t` is a grid multiple, otherwise
    /// linear interpolation between the neighboring rows.
    pub fn sample_time(&self, t: T) -> Result<PointCloud<T>> {
        let horizon = self.horizon();
        let eps = T::lit(1e-12);
        if !(t >= -eps && t <= horizon + eps) {
            return Err(Error::OutOfHorizon { t: t.as_f64(), horizon: horizon.as_f64() });
        }
        let s = (t * T::from_count(self.config.steps)).max(T::zero());
        let r = s.round();
        if (s - r).abs() <= T::lit(1e-9) * r.max(T::one()) {
            return Ok(self.at_step((r.as_f64() as usize).min(self.taken)));
        }
        let lo = (s.floor().as_f64() as usize).min(self.taken - 1);
        let frac = s - T::from_count(lo);
        let mut coords = Vec::with_capacity(self.n_points * self.dim);
        for n in 0..self.n_points {
            let (p0, p1) = (self.position(n, lo), self.position(n, lo + 1));
            coords.extend(p0.iter().zip(p1).map(|(&a, &b)| a + frac * (b - a)));
        }
        Ok(self.template.with_coords(coords))
    }
}

/// Endpoint derivatives `D_a f_n`, one `D x K` block per point.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobianStack<T> {
    pub dim: usize,
    pub n_params: usize,
    /// `jac[(n * dim + d) * n_params + k]`.
    pub jac: Vec<T>,
}

impl<T: Real> JacobianStack<T> {
    pub fn len(&self) -> usize {
        self.jac.len() / (self.dim * self.n_params).max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.jac.is_empty()
    }

    /// Row `d` of the block for point `n`.
    #[inline]
    pub fn row(&self, n: usize, d: usize) -> &[T] {
        let start = (n * self.dim + d) * self.n_params;
        &self.jac[start..start + self.n_params]
    }

    /// `D_a f_n` as a `D x K` row-major slice.
    pub fn block(&self, n: usize) -> &[T] {
        let sz = self.dim * self.n_params;
        &self.jac[n * sz..(n + 1) * sz]
    }
}

#[inline]
fn rk2_step<T: Real, F: VelocityField<T> + ?Sized>(field: &F, h: T, x: &mut [T], scratch: &mut [T]) {
    let dim = x.len();
    field.velocity(x, scratch);
    let half = h * T::lit(0.5);
    let mut mid = [T::zero(); 3];
    for d in 0..dim {
        mid[d] = x[d] + half * scratch[d];
    }
    field.velocity(&mid[..dim], scratch);
    for d in 0..dim {
        x[d] += h * scratch[d];
    }
}

/// Integrates every point of `points` for `n_steps` RK2 steps of size `1 / config.steps`.
pub fn integrate_field<T: Real, F: VelocityField<T> + ?Sized>(
    points: &PointCloud<T>,
    field: &F,
    config: &FlowConfig<T>,
    n_steps: usize,
) -> Result<TrajectoryBundle<T>> {
    let dim = points.dim();
    if field.dim() != dim {
        return Err(Error::InvalidArgument(format!("{}-D field applied to {dim}-D points", field.dim())));
    }
    let stride = (n_steps + 1) * dim;
    let h = config.step_size();
    let mut positions = vec![T::zero(); points.len() * stride];
    let failures: Vec<usize> = positions
        .par_chunks_mut(stride)
        .zip(points.coords().par_chunks(dim))
        .filter_map(|(traj, x0)| {
            traj[..dim].copy_from_slice(x0);
            let mut x = [T::zero(); 3];
            x[..dim].copy_from_slice(x0);
            let mut scratch = [T::zero(); 3];
            for t in 1..=n_steps {
                rk2_step(field, h, &mut x[..dim], &mut scratch);
                if x[..dim].iter().any(|c| !c.is_finite()) {
                    return Some(t);
                }
                traj[t * dim..(t + 1) * dim].copy_from_slice(&x[..dim]);
            }
            None
        })
        .collect();
    if let Some(&step) = failures.iter().min() {
        return Err(Error::NonFiniteState { step });
    }
    Ok(TrajectoryBundle {
        dim,
        n_points: points.len(),
        taken: n_steps,
        positions,
        config: *config,
        template: points.clone(),
    })
}

fn check_inputs<T: Real>(points: &PointCloud<T>, basis: &DeformationBasis<T>, a: &CoefficientVector<T>) -> Result<()> {
    if a.len() != basis.len() {
        return Err(Error::InvalidArgument(format!("{} coefficients for a basis of size {}", a.len(), basis.len())));
    }
    if points.dim() != basis.dim() {
        return Err(Error::InvalidArgument("point and basis dimensions differ".into()));
    }
    Ok(())
}

/// Trajectories on `[0, 1]` under the basis field with coefficients `a`.
pub fn integrate<T: Real>(
    points: &PointCloud<T>,
    basis: &DeformationBasis<T>,
    a: &CoefficientVector<T>,
    config: &FlowConfig<T>,
) -> Result<TrajectoryBundle<T>> {
    check_inputs(points, basis, a)?;
    integrate_field(points, &BasisField { basis, a: a.as_slice() }, config, config.steps)
}

/// Continues the same autonomous flow up to `t_max >= 1` with the same step size.
pub fn extrapolate<T: Real>(
    points: &PointCloud<T>,
    basis: &DeformationBasis<T>,
    a: &CoefficientVector<T>,
    config: &FlowConfig<T>,
    t_max: T,
) -> Result<TrajectoryBundle<T>> {
    check_inputs(points, basis, a)?;
    if !(t_max >= T::zero() && t_max <= config.max_time) {
        return Err(Error::InvalidArgument(format!(
            "extrapolation time {t_max} outside [0, {}]",
            config.max_time
        )));
    }
    let steps = config.steps_for(t_max).max(config.steps);
    integrate_field(points, &BasisField { basis, a: a.as_slice() }, config, steps)
}

/// Integrates and propagates `D_a x_n^(t)` through each RK2 step by the chain rule:
///
/// ```text
/// m      = x + h/2 v(x)
/// D_a m  = D_a x + h/2 (D_x v(x) D_a x + V(x))
/// D_a x' = D_a x + h   (D_x v(m) D_a m + V(m))
/// ```
///
/// where `V(x) = [v_1(x) .. v_K(x)]`, starting from `D_a x^(0) = 0`.
pub fn integrate_with_jacobians<T: Real>(
    points: &PointCloud<T>,
    basis: &DeformationBasis<T>,
    a: &CoefficientVector<T>,
    config: &FlowConfig<T>,
) -> Result<(PointCloud<T>, JacobianStack<T>)> {
    check_inputs(points, basis, a)?;
    let dim = points.dim();
    let k = basis.len();
    let h = config.step_size();
    let half = h * T::lit(0.5);
    let block = dim * k;
    let mut jac = vec![T::zero(); points.len() * block];
    let mut ends = points.coords().to_vec();

    let failures: Vec<usize> = jac
        .par_chunks_mut(block)
        .zip(ends.par_chunks_mut(dim))
        .filter_map(|(dx, x)| {
            let mut dm = vec![T::zero(); block];
            for t in 1..=config.steps {
                let s0 = basis.sample(a.as_slice(), x, true);
                let mut mid = [T::zero(); 3];
                for d in 0..dim {
                    mid[d] = x[d] + half * s0.value[d];
                }
                // D_a m
                for i in 0..dim {
                    for kk in 0..k {
                        let mut acc = s0.columns[kk * dim + i];
                        for e in 0..dim {
                            acc += s0.jacobian[i][e] * dx[e * k + kk];
                        }
                        dm[i * k + kk] = dx[i * k + kk] + half * acc;
                    }
                }
                let s1 = basis.sample(a.as_slice(), &mid[..dim], true);
                for i in 0..dim {
                    for kk in 0..k {
                        let mut acc = s1.columns[kk * dim + i];
                        for e in 0..dim {
                            acc += s1.jacobian[i][e] * dm[e * k + kk];
                        }
                        dx[i * k + kk] += h * acc;
                    }
                }
                for d in 0..dim {
                    x[d] += h * s1.value[d];
                }
                if x.iter().chain(dx.iter()).any(|c| !c.is_finite()) {
                    return Some(t);
                }
            }
            None
        })
        .collect();
    if let Some(&step) = failures.iter().min() {
        return Err(Error::NonFiniteState { step });
    }
    Ok((points.with_coords(ends), JacobianStack { dim, n_params: k, jac }))
}

pub fn endpoint_jacobians<T: Real>(
    points: &PointCloud<T>,
    basis: &DeformationBasis<T>,
    a: &CoefficientVector<T>,
    config: &FlowConfig<T>,
) -> Result<JacobianStack<T>> {
    integrate_with_jacobians(points, basis, a, config).map(|(_, j)| j)
}

/// Shoelace area of a closed polygon given by its vertices in order.
pub fn polygon_area<T: Real>(cloud: &PointCloud<T>) -> T {
    let n = cloud.len();
    let mut twice = T::zero();
    for i in 0..n {
        let (p, q) = (cloud.point(i), cloud.point((i + 1) % n));
        twice += p[0] * q[1] - q[0] * p[1];
    }
    (twice * T::lit(0.5)).abs()
}

/// Enclosed volume of a closed, consistently oriented triangle mesh.
pub fn mesh_volume<T: Real>(mesh: &Mesh<T>) -> T {
    let c = &mesh.cloud;
    let mut six = T::zero();
    for [a, b, d] in mesh.triangles() {
        let (p, q, r) = (c.point(a), c.point(b), c.point(d));
        six += p[0] * (q[1] * r[2] - q[2] * r[1]) - p[1] * (q[0] * r[2] - q[2] * r[0]) + p[2] * (q[0] * r[1] - q[1] * r[0]);
    }
    (six / T::lit(6.0)).abs()
}

/// Area (2-D polygon in vertex order) or volume (3-D closed mesh) enclosed by the region.
pub fn region_measure<T: Real>(region: &Mesh<T>) -> T {
    if region.cloud.dim() == 2 {
        polygon_area(&region.cloud)
    } else {
        mesh_volume(region)
    }
}

/// Advects the boundary vertices of `region` to time `t` and returns the
/// enclosed area or volume.
pub fn measure_region_volume<T: Real, F: VelocityField<T> + ?Sized>(
    region: &Mesh<T>,
    field: &F,
    config: &FlowConfig<T>,
    t: T,
) -> Result<T> {
    let steps = config.steps_for(t);
    let bundle = integrate_field(&region.cloud, field, config, steps)?;
    let moved = bundle.sample_time(t)?;
    let advected = Mesh::new(moved, region.faces().to_vec())?;
    Ok(region_measure(&advected))
}
