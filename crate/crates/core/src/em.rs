//! Expectation maximization over the deformation coefficients.
//!
//! The source endpoints `f_n` are the means of an isotropic Gaussian mixture
//! with variance `sigma2`, plus a uniform outlier component of unit density on
//! the domain. The E-step computes posterior responsibilities `W` from the
//! combined distance; the M-step takes one damped, Huber-reweighted
//! Gauss-Newton step on
//!
//! ```text
//! E(a) = 1/2 a^T L^-1 a + 1/sigma2 sum_nm W_nm rho(|y_m - f_n(a)|)
//! ```
//!
//! with `L = diag(lambda_k)` the prior variances of the basis.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::{CoefficientVector, DeformationBasis};
use crate::descriptors::{build_distance_model, DescriptorSet, DistanceModel};
use crate::domain::PointCloud;
use crate::error::{Error, Result};
use crate::flow::{integrate, integrate_with_jacobians, FlowConfig, JacobianStack};
use crate::scalar::{dist, Real};

/// Huber loss: quadratic up to `r0`, linear beyond.
#[inline]
pub fn huber<T: Real>(r: T, r0: T) -> T {
    let a = r.abs();
    if a <= r0 {
        T::lit(0.5) * r * r
    } else {
        r0 * a - T::lit(0.5) * r0 * r0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmConfig<T> {
    pub sigma2: T,
    /// Huber threshold in domain units.
    pub r0: T,
    pub max_iters: usize,
    /// Stop once the relative objective change stays below this for three iterations.
    pub rel_energy_tol: T,
    /// Responsibilities below this are stored as zero.
    pub w_truncation: T,
    /// Step halvings tried before a Gauss-Newton step is rejected.
    pub max_halvings: usize,
}

impl<T: Real> Default for EmConfig<T> {
    fn default() -> Self {
        EmConfig {
            sigma2: T::lit(0.01),
            r0: T::lit(0.01),
            max_iters: 100,
            rel_energy_tol: T::lit(1e-5),
            w_truncation: T::lit(1e-8),
            max_halvings: 10,
        }
    }
}

impl<T: Real> EmConfig<T> {
    fn validate(&self) -> Result<()> {
        if !(self.sigma2 > T::zero()) || !(self.r0 > T::zero()) || self.w_truncation < T::zero() {
            return Err(Error::InvalidArgument("sigma2 and r0 must be positive, w_truncation nonnegative".into()));
        }
        Ok(())
    }
}

/// Soft correspondences: `w[n * m_count + m]`, plus the outlier probability of each target.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrespondenceMatrix<T> {
    pub n: usize,
    pub m: usize,
    pub w: Vec<T>,
    pub outlier_mass: Vec<T>,
}

impl<T: Real> CorrespondenceMatrix<T> {
    pub fn zeros(n: usize, m: usize) -> Self {
        CorrespondenceMatrix { n, m, w: vec![T::zero(); n * m], outlier_mass: vec![T::one(); m] }
    }

    #[inline]
    pub fn get(&self, n: usize, m: usize) -> T {
        self.w[n * self.m + m]
    }

    pub fn row(&self, n: usize) -> &[T] {
        &self.w[n * self.m..(n + 1) * self.m]
    }

    /// `outlier_mass[m] + sum_n w[n][m]` for every target.
    pub fn column_totals(&self) -> Vec<T> {
        let mut totals = self.outlier_mass.clone();
        for n in 0..self.n {
            for (t, &w) in totals.iter_mut().zip(self.row(n)) {
                *t += w;
            }
        }
        totals
    }

    /// Number of nonzero stored entries.
    pub fn nonzeros(&self) -> usize {
        self.w.iter().filter(|&&w| w != T::zero()).count()
    }
}

/// Outlier density term `(2 pi sigma2)^(D/2)` of the E-step denominator.
pub fn outlier_term<T: Real>(sigma2: T, dim: usize) -> T {
    (T::two_pi() * sigma2).powf(T::lit(dim as f64 / 2.0))
}

fn responsibilities<T: Real>(model: &DistanceModel<T>, f: &PointCloud<T>, y: &PointCloud<T>, sigma2: T) -> (Vec<Vec<T>>, Vec<T>) {
    let c = outlier_term(sigma2, f.dim());
    let inv = T::one() / (T::lit(2.0) * sigma2);
    let cols: Vec<(Vec<T>, T)> = (0..y.len())
        .into_par_iter()
        .map(|m| {
            let ym = y.point(m);
            let mut col: Vec<T> = (0..f.len())
                .map(|n| {
                    let d = model.combined_distance(n, m, f.point(n), ym);
                    (-(d * d) * inv).exp()
                })
                .collect();
            let denom = col.iter().fold(c, |acc, &e| acc + e);
            col.iter_mut().for_each(|e| *e /= denom);
            (col, c / denom)
        })
        .collect();
    let outliers = cols.iter().map(|c| c.1).collect();
    (cols.into_iter().map(|c| c.0).collect(), outliers)
}

/// Posterior responsibilities of every source endpoint for every target.
///
/// ```text
/// w_nm = exp(-d_nm^2 / 2 sigma2) / ((2 pi sigma2)^(D/2) + sum_n' exp(-d_n'm^2 / 2 sigma2))
/// ```
///
/// Entries below `w_truncation` are zeroed afterwards without renormalizing.
pub fn e_step<T: Real>(
    model: &DistanceModel<T>,
    f: &PointCloud<T>,
    y: &PointCloud<T>,
    cfg: &EmConfig<T>,
) -> Result<CorrespondenceMatrix<T>> {
    cfg.validate()?;
    let (n, m) = (f.len(), y.len());
    let (cols, outlier_mass) = responsibilities(model, f, y, cfg.sigma2);
    let mut w = vec![T::zero(); n * m];
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            w[i * m + j] = if v < cfg.w_truncation { T::zero() } else { v };
        }
    }
    Ok(CorrespondenceMatrix { n, m, w, outlier_mass })
}

/// The E-step without truncation, for checking the column-sum invariant.
pub fn e_step_untruncated<T: Real>(
    model: &DistanceModel<T>,
    f: &PointCloud<T>,
    y: &PointCloud<T>,
    sigma2: T,
) -> CorrespondenceMatrix<T> {
    let (n, m) = (f.len(), y.len());
    let (cols, outlier_mass) = responsibilities(model, f, y, sigma2);
    let mut w = vec![T::zero(); n * m];
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            w[i * m + j] = v;
        }
    }
    CorrespondenceMatrix { n, m, w, outlier_mass }
}

fn prior_term<T: Real>(a: &CoefficientVector<T>, basis: &DeformationBasis<T>) -> T {
    a.as_slice().iter().zip(basis.kl_weights()).fold(T::zero(), |acc, (&ak, l)| acc + ak * ak / l) * T::lit(0.5)
}

/// M-step energy `1/2 a^T L^-1 a + 1/sigma2 sum W_nm rho(|y_m - f_n|)`.
pub fn energy<T: Real>(
    a: &CoefficientVector<T>,
    w: &CorrespondenceMatrix<T>,
    f_endpoints: &PointCloud<T>,
    y: &PointCloud<T>,
    basis: &DeformationBasis<T>,
    cfg: &EmConfig<T>,
) -> T {
    let data: Vec<T> = (0..w.n)
        .into_par_iter()
        .map(|n| {
            let fnp = f_endpoints.point(n);
            w.row(n).iter().enumerate().fold(T::zero(), |acc, (m, &wnm)| {
                if wnm == T::zero() {
                    acc
                } else {
                    acc + wnm * huber(dist(y.point(m), fnp), cfg.r0)
                }
            })
        })
        .collect();
    let data = data.into_iter().fold(T::zero(), |a, b| a + b);
    prior_term(a, basis) + data / cfg.sigma2
}

/// Negative log posterior of the mixture model,
/// `1/2 a^T L^-1 a - sum_m ln((2 pi sigma2)^(D/2) + sum_n exp(-d_nm^2 / 2 sigma2))`.
/// This is the quantity EM descends; it does not depend on `W`.
pub fn objective<T: Real>(
    a: &CoefficientVector<T>,
    model: &DistanceModel<T>,
    f_endpoints: &PointCloud<T>,
    y: &PointCloud<T>,
    basis: &DeformationBasis<T>,
    sigma2: T,
) -> T {
    let c = outlier_term(sigma2, f_endpoints.dim());
    let inv = T::one() / (T::lit(2.0) * sigma2);
    let logs: Vec<T> = (0..y.len())
        .into_par_iter()
        .map(|m| {
            let ym = y.point(m);
            let s = (0..f_endpoints.len()).fold(c, |acc, n| {
                let d = model.combined_distance(n, m, f_endpoints.point(n), ym);
                acc + (-(d * d) * inv).exp()
            });
            s.ln()
        })
        .collect();
    prior_term(a, basis) - logs.into_iter().fold(T::zero(), |a, b| a + b)
}

/// Row sums `s_n` and residuals `r_n = sum_m W^_nm (f_n - y_m)` with the
/// Huber reweighting `W^_nm = W_nm r0 / |f_n - y_m|` beyond `r0` when `r0` is given.
fn weighted_residuals<T: Real>(
    w: &CorrespondenceMatrix<T>,
    f: &PointCloud<T>,
    y: &PointCloud<T>,
    r0: Option<T>,
) -> Vec<(T, [T; 3])> {
    let dim = f.dim();
    (0..w.n)
        .into_par_iter()
        .map(|n| {
            let fnp = f.point(n);
            let mut s = T::zero();
            let mut r = [T::zero(); 3];
            for (m, &wnm) in w.row(n).iter().enumerate() {
                if wnm == T::zero() {
                    continue;
                }
                let ym = y.point(m);
                let wh = match r0 {
                    Some(r0) => {
                        let d = dist(fnp, ym);
                        if d > r0 {
                            wnm * (r0 / d)
                        } else {
                            wnm
                        }
                    }
                    None => wnm,
                };
                s += wh;
                for k in 0..dim {
                    r[k] += wh * (fnp[k] - ym[k]);
                }
            }
            (s, r)
        })
        .collect()
}

fn solve_step<T: Real>(
    a: &CoefficientVector<T>,
    w: &CorrespondenceMatrix<T>,
    f: &PointCloud<T>,
    jac: &JacobianStack<T>,
    y: &PointCloud<T>,
    basis: &DeformationBasis<T>,
    sigma2: T,
    r0: Option<T>,
) -> Result<CoefficientVector<T>> {
    let (dim, k) = (f.dim(), basis.len());
    if jac.n_params != k || jac.dim != dim || jac.len() != f.len() || a.len() != k {
        return Err(Error::InvalidArgument("Jacobian, endpoint and coefficient shapes disagree".into()));
    }
    let rows = weighted_residuals(w, f, y, r0);
    // J scaled row-wise by sqrt(s_n), so that J_s^T J_s = J^T W~ J.
    let mut js = DMatrix::<T>::zeros(f.len() * dim, k);
    let mut grad = DVector::<T>::zeros(k);
    for (n, (s, r)) in rows.iter().enumerate() {
        let root = s.sqrt();
        for d in 0..dim {
            let jrow = jac.row(n, d);
            for (kk, &v) in jrow.iter().enumerate() {
                js[(n * dim + d, kk)] = root * v;
                grad[kk] += v * r[d];
            }
        }
    }
    let mut h = js.tr_mul(&js);
    for (kk, lambda) in basis.kl_weights().enumerate() {
        let damp = sigma2 / lambda;
        h[(kk, kk)] += damp;
        grad[kk] += damp * a.as_slice()[kk];
    }
    if h.iter().chain(grad.iter()).any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    let chol = h.cholesky().ok_or(Error::SingularSystem)?;
    let delta = chol.solve(&grad);
    let next: Vec<T> = a.as_slice().iter().zip(delta.iter()).map(|(&ai, &di)| ai - di).collect();
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    CoefficientVector::new(next)
}

/// One damped Gauss-Newton step with Huber reweighting:
///
/// ```text
/// a' = a - (J^T W~ J + sigma2 L^-1)^-1 (J^T r + sigma2 L^-1 a)
/// ```
pub fn gauss_newton_step<T: Real>(
    a: &CoefficientVector<T>,
    w: &CorrespondenceMatrix<T>,
    f_endpoints: &PointCloud<T>,
    jacobians: &JacobianStack<T>,
    y: &PointCloud<T>,
    basis: &DeformationBasis<T>,
    cfg: &EmConfig<T>,
) -> Result<CoefficientVector<T>> {
    solve_step(a, w, f_endpoints, jacobians, y, basis, cfg.sigma2, Some(cfg.r0))
}

/// The same step for the plain least-squares energy (no Huber reweighting).
pub fn least_squares_step<T: Real>(
    a: &CoefficientVector<T>,
    w: &CorrespondenceMatrix<T>,
    f_endpoints: &PointCloud<T>,
    jacobians: &JacobianStack<T>,
    y: &PointCloud<T>,
    basis: &DeformationBasis<T>,
    sigma2: T,
) -> Result<CoefficientVector<T>> {
    solve_step(a, w, f_endpoints, jacobians, y, basis, sigma2, None)
}

/// `sigma2 * E_LS(a) = sigma2/2 a^T L^-1 a + 1/2 sum W_nm |y_m - f_n|^2`.
pub fn scaled_least_squares_energy<T: Real>(
    a: &CoefficientVector<T>,
    w: &CorrespondenceMatrix<T>,
    f_endpoints: &PointCloud<T>,
    y: &PointCloud<T>,
    basis: &DeformationBasis<T>,
    sigma2: T,
) -> T {
    let mut data = T::zero();
    for n in 0..w.n {
        for (m, &wnm) in w.row(n).iter().enumerate() {
            data += wnm * crate::scalar::dist2(y.point(m), f_endpoints.point(n));
        }
    }
    sigma2 * prior_term(a, basis) + T::lit(0.5) * data
}

/// Gradient of [`scaled_least_squares_energy`]: `sigma2 L^-1 a + J^T r`.
pub fn scaled_least_squares_gradient<T: Real>(
    a: &CoefficientVector<T>,
    w: &CorrespondenceMatrix<T>,
    f_endpoints: &PointCloud<T>,
    jacobians: &JacobianStack<T>,
    y: &PointCloud<T>,
    basis: &DeformationBasis<T>,
    sigma2: T,
) -> Vec<T> {
    let rows = weighted_residuals(w, f_endpoints, y, None);
    let mut g: Vec<T> = a.as_slice().iter().zip(basis.kl_weights()).map(|(&ak, l)| sigma2 * ak / l).collect();
    for (n, (_, r)) in rows.iter().enumerate() {
        for d in 0..f_endpoints.dim() {
            for (gk, &j) in g.iter_mut().zip(jacobians.row(n, d)) {
                *gk += j * r[d];
            }
        }
    }
    g
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmState<T> {
    pub a: CoefficientVector<T>,
    pub w: CorrespondenceMatrix<T>,
    pub iteration: usize,
    /// Objective after each accepted iterate, starting with `a = 0`.
    pub energy_history: Vec<T>,
    /// Iterations whose Gauss-Newton step could not reduce the energy within the halving budget.
    pub rejected_steps: usize,
    pub converged: bool,
}

/// Alternates E-steps and single Gauss-Newton M-steps starting from `a = 0`.
///
/// A step is accepted once both the M-step energy (with the current `W`) and
/// the mixture objective do not increase, halving it up to
/// `cfg.max_halvings` times. A rejected step leaves `a` unchanged and ends the
/// loop, since the next iteration would repeat it exactly.
pub fn run_em<T: Real>(
    x: &PointCloud<T>,
    y: &PointCloud<T>,
    basis: &DeformationBasis<T>,
    desc_x: &DescriptorSet<T>,
    desc_y: &DescriptorSet<T>,
    flow_cfg: &FlowConfig<T>,
    em_cfg: &EmConfig<T>,
) -> Result<EmState<T>> {
    em_cfg.validate()?;
    if x.dim() != basis.dim() || y.dim() != basis.dim() {
        return Err(Error::InvalidArgument("cloud and basis dimensions differ".into()));
    }
    let model = build_distance_model(x, y, desc_x, desc_y)?;
    let at = |iteration: usize| move |e: Error| Error::Iteration { iteration, source: Box::new(e) };

    let mut a = CoefficientVector::zeros(basis.len());
    let (mut f, mut jac) = integrate_with_jacobians(x, basis, &a, flow_cfg).map_err(at(0))?;
    let mut current = objective(&a, &model, &f, y, basis, em_cfg.sigma2);
    let mut history = vec![current];
    let mut w = CorrespondenceMatrix::zeros(x.len(), y.len());
    let mut rejected = 0;
    let mut converged = false;
    let mut quiet = 0;

    for iteration in 1..=em_cfg.max_iters {
        w = e_step(&model, &f, y, em_cfg)?;
        let e_now = energy(&a, &w, &f, y, basis, em_cfg);
        let proposal = gauss_newton_step(&a, &w, &f, &jac, y, basis, em_cfg).map_err(at(iteration))?;
        let delta: Vec<T> = proposal.as_slice().iter().zip(a.as_slice()).map(|(&p, &q)| p - q).collect();

        let mut scale = T::one();
        let mut accepted = None;
        for _ in 0..=em_cfg.max_halvings {
            let cand = CoefficientVector::new(a.as_slice().iter().zip(&delta).map(|(&ai, &di)| ai + scale * di).collect())
                .map_err(at(iteration))?;
            let fc = integrate(x, basis, &cand, flow_cfg).map_err(at(iteration))?.endpoints();
            let e_cand = energy(&cand, &w, &fc, y, basis, em_cfg);
            let obj_cand = objective(&cand, &model, &fc, y, basis, em_cfg.sigma2);
            if e_cand <= e_now && obj_cand <= current {
                accepted = Some((cand, obj_cand));
                break;
            }
            scale *= T::lit(0.5);
        }
        let Some((next, obj_next)) = accepted else {
            log::debug!("iteration {iteration}: no energy decrease after {} halvings", em_cfg.max_halvings);
            rejected += 1;
            history.push(current);
            converged = true;
            break;
        };
        a = next;
        (f, jac) = integrate_with_jacobians(x, basis, &a, flow_cfg).map_err(at(iteration))?;
        let rel = (current - obj_next).abs() / current.abs().max(T::lit(1e-300));
        current = obj_next;
        history.push(current);
        log::debug!("iteration {iteration}: objective {current:e}, step scale {scale}");
        quiet = if rel < em_cfg.rel_energy_tol { quiet + 1 } else { 0 };
        if quiet >= 3 {
            converged = true;
            break;
        }
    }
    let iteration = history.len() - 1;
    Ok(EmState { a, w, iteration, energy_history: history, rejected_steps: rejected, converged })
}

fn argmin_rows<T: Real>(n: usize, m: usize, cost: impl Fn(usize, usize) -> T + Sync) -> Vec<(usize, usize)> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = (0, cost(i, 0));
            for j in 1..m {
                let c = cost(i, j);
                if c < best.1 {
                    best = (j, c);
                }
            }
            (i, best.0)
        })
        .collect()
}

/// Hard matches: for every source point the target minimizing the combined
/// distance, lowest target index on ties.
pub fn extract_correspondences<T: Real>(
    f_full: &PointCloud<T>,
    y_full: &PointCloud<T>,
    model_full: &DistanceModel<T>,
) -> Result<Vec<(usize, usize)>> {
    if y_full.is_empty() {
        return Err(Error::InvalidArgument("empty target".into()));
    }
    let expected = (f_full.len(), y_full.len());
    let scale = model_full.descriptor_scale();
    if scale != T::zero() && model_full.shape() != expected {
        return Err(Error::InvalidArgument("distance model shape does not match the clouds".into()));
    }
    Ok(argmin_rows(f_full.len(), y_full.len(), |i, j| {
        model_full.combine(i, j, dist(f_full.point(i), y_full.point(j)))
    }))
}

/// Like [`extract_correspondences`], computing descriptor distances on the fly
/// with a given descriptor weight instead of storing the `N x M` matrix.
pub fn extract_correspondences_streaming<T: Real>(
    f_full: &PointCloud<T>,
    y_full: &PointCloud<T>,
    desc_x: &DescriptorSet<T>,
    desc_y: &DescriptorSet<T>,
    descriptor_scale: T,
) -> Result<Vec<(usize, usize)>> {
    if y_full.is_empty() {
        return Err(Error::InvalidArgument("empty target".into()));
    }
    let with_desc = descriptor_scale != T::zero() && !desc_x.is_none() && !desc_y.is_none();
    if with_desc && (desc_x.rows() != f_full.len() || desc_y.rows() != y_full.len()) {
        return Err(Error::RowCountMismatch { expected: f_full.len(), found: desc_x.rows() });
    }
    Ok(argmin_rows(f_full.len(), y_full.len(), |i, j| {
        let e = dist(f_full.point(i), y_full.point(j));
        if with_desc {
            e + descriptor_scale * dist(desc_x.row(i), desc_y.row(j))
        } else {
            e
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huber_branches() {
        assert!((huber(0.005f64, 0.01) - 1.25e-5).abs() < 1e-20);
        assert!((huber(0.02f64, 0.01) - 1.5e-4).abs() < 1e-18);
        assert!((huber(-0.02f64, 0.01) - 1.5e-4).abs() < 1e-18);
        let r0 = 0.01f64;
        assert_eq!(huber(r0, r0), 0.5 * r0 * r0);
        let eps = 1e-9;
        assert!((huber(r0 - eps, r0) - huber(r0 + eps, r0)).abs() < 1e-10);
    }

    fn single(d: f64) -> (DistanceModel<f64>, PointCloud<f64>, PointCloud<f64>) {
        let x = PointCloud::from_points(3, &[[0.5, 0.5, 0.5]]).unwrap();
        let y = PointCloud::from_points(3, &[[0.5 + d, 0.5, 0.5]]).unwrap();
        (DistanceModel::euclidean(1, 1), x, y)
    }

    #[test]
    fn single_pair_weight() {
        let (m, x, y) = single(0.0);
        let w = e_step(&m, &x, &y, &EmConfig::default()).unwrap();
        let expect = 1.0 / (1.0 + (2.0 * std::f64::consts::PI * 0.01f64).powf(1.5));
        assert!((w.get(0, 0) - expect).abs() < 1e-15);
        assert!((w.get(0, 0) - 0.98449).abs() < 1e-5);
        assert!((w.outlier_mass[0] + w.get(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn far_target_is_outlier() {
        let (m, x, y) = single(40.0);
        let w = e_step(&m, &x, &y, &EmConfig::default()).unwrap();
        assert_eq!(w.get(0, 0), 0.0);
        assert_eq!(w.outlier_mass[0], 1.0);
    }

    #[test]
    fn equidistant_sources_share_weight() {
        let x = PointCloud::from_points(2, &[[0.4, 0.5], [0.6, 0.5]]).unwrap();
        let y = PointCloud::from_points(2, &[[0.5, 0.5]]).unwrap();
        let w = e_step(&DistanceModel::euclidean(2, 1), &x, &y, &EmConfig::default()).unwrap();
        assert_eq!(w.get(0, 0), w.get(1, 0));
    }

    #[test]
    fn energy_examples() {
        let basis = DeformationBasis::with_default_exponent(3, 3).unwrap();
        let cfg = EmConfig::default();
        let (_, x, y) = single(0.005);
        let zero = CoefficientVector::zeros(3);
        let w0 = CorrespondenceMatrix::zeros(1, 1);
        assert_eq!(energy(&zero, &w0, &x, &y, &basis, &cfg), 0.0);
        let mut w1 = w0.clone();
        w1.w[0] = 1.0;
        assert!((energy(&zero, &w1, &x, &y, &basis, &cfg) - 1.25e-3).abs() < 1e-15);
        let e1 = energy(&CoefficientVector::unit(3, 0), &w0, &x, &y, &basis, &cfg);
        assert!((e1 - 0.5 * (3.0 * std::f64::consts::PI.powi(2)).powf(1.5)).abs() < 1e-9);
        assert!((e1 - 80.56).abs() < 1e-2);
    }

    #[test]
    fn prior_only_step_returns_to_zero() {
        let basis = DeformationBasis::<f64>::with_default_exponent(2, 5).unwrap();
        let x = PointCloud::from_points(2, &[[0.3, 0.4], [0.6, 0.7]]).unwrap();
        let a = basis.sample_prior(9);
        let (f, jac) = integrate_with_jacobians(&x, &basis, &a, &FlowConfig::new(3).unwrap()).unwrap();
        let w = CorrespondenceMatrix::zeros(2, 2);
        let next = gauss_newton_step(&a, &w, &f, &jac, &x, &basis, &EmConfig::default()).unwrap();
        for v in next.as_slice() {
            assert!(v.abs() < 1e-15);
        }
    }

    #[test]
    fn extraction_ties_go_to_lowest_index() {
        let f = PointCloud::from_points(2, &[[0.5, 0.5]]).unwrap();
        let y = PointCloud::from_points(2, &[[0.4, 0.5], [0.6, 0.5], [0.5, 0.5]]).unwrap();
        let m = DistanceModel::euclidean(1, 3);
        assert_eq!(extract_correspondences(&f, &y, &m).unwrap(), vec![(0, 2)]);
        let y2 = PointCloud::from_points(2, &[[0.4, 0.5], [0.6, 0.5]]).unwrap();
        assert_eq!(extract_correspondences(&f, &y2, &DistanceModel::euclidean(1, 2)).unwrap(), vec![(0, 0)]);
    }
}
