//! Divergence-free velocity basis on the unit cube.
//!
//! Each entry is the curl of a Dirichlet Laplacian eigenfunction
//! `phi_j(x) = prod_d sqrt(2) sin(pi j_d x_d)` placed in one component of a
//! vector potential. In 3-D the three components give
//! `(0, d3 phi, -d2 phi)`, `(-d3 phi, 0, d1 phi)`, `(d2 phi, -d1 phi, 0)`;
//! in 2-D the single entry is the rotated gradient `(d2 phi, -d1 phi)`.
//! Entries are ordered by increasing frequency `sum_d j_d^2` and weighted
//! with the Karhunen-Loeve variances `lambda_k = (-lambda_k^Delta)^(-exponent)`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Frequency multi-index plus the potential component it is placed in.
///
/// `j[2]` is unused (zero) in 2-D. `component` is 1-based: `1..=3` in 3-D, `1` in 2-D.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeIndex {
    pub j: [u32; 3],
    pub component: u8,
}

impl ModeIndex {
    pub fn new(j: &[u32], component: u8) -> Self {
        let mut jj = [0; 3];
        jj[..j.len()].copy_from_slice(j);
        ModeIndex { j: jj, component }
    }

    pub fn freq(&self, dim: usize) -> &[u32] {
        &self.j[..dim]
    }

    fn squared_norm(&self, dim: usize) -> u32 {
        self.freq(dim).iter().map(|j| j * j).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasisEntry<T> {
    pub mode: ModeIndex,
    /// Laplace eigenvalue `-pi^2 sum_d j_d^2`.
    pub laplace_eigenvalue: T,
    /// Prior variance of the coefficient.
    pub kl_weight: T,
}

/// The first `K` basis entries for a dimension and KL exponent.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationBasis<T> {
    dim: usize,
    exponent: T,
    entries: Vec<BasisEntry<T>>,
    max_freq: [usize; 3],
}

/// Coefficients `a_k` of the field in the basis.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientVector<T>(Vec<T>);

impl<T: Real> CoefficientVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        Ok(CoefficientVector(values))
    }

    pub fn zeros(k: usize) -> Self {
        CoefficientVector(vec![T::zero(); k])
    }

    /// Unit vector `e_k` (0-based).
    pub fn unit(k: usize, index: usize) -> Self {
        let mut v = vec![T::zero(); k];
        v[index] = T::one();
        CoefficientVector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn norm(&self) -> T {
        crate::scalar::norm(&self.0)
    }

    pub fn scaled(&self, s: T) -> Self {
        CoefficientVector(self.0.iter().map(|&v| v * s).collect())
    }
}

/// Per-point tables of `sqrt(2) sin(pi j x_d)` and `sqrt(2) cos(pi j x_d)`.
struct Trig<T> {
    stride: usize,
    sin: Vec<T>,
    cos: Vec<T>,
}

impl<T: Real> Trig<T> {
    fn new(x: &[T], max_freq: &[usize]) -> Self {
        let stride = max_freq.iter().copied().max().unwrap_or(0) + 1;
        let mut sin = vec![T::zero(); stride * x.len()];
        let mut cos = vec![T::zero(); stride * x.len()];
        let root2 = T::lit(2f64.sqrt());
        for (d, &xd) in x.iter().enumerate() {
            for j in 1..=max_freq[d] {
                let arg = T::pi() * T::from_count(j) * xd;
                sin[d * stride + j] = root2 * arg.sin();
                cos[d * stride + j] = root2 * arg.cos();
            }
        }
        Trig { stride, sin, cos }
    }

    #[inline]
    fn s(&self, d: usize, j: u32) -> T {
        self.sin[d * self.stride + j as usize]
    }

    #[inline]
    fn c(&self, d: usize, j: u32) -> T {
        self.cos[d * self.stride + j as usize]
    }
}

/// Gradient and Hessian of one eigenfunction at a point.
#[derive(Clone, Copy, Debug)]
struct Derivs<T> {
    grad: [T; 3],
    hess: [[T; 3]; 3],
}

fn derivs<T: Real>(dim: usize, j: &[u32], trig: &Trig<T>) -> Derivs<T> {
    let mut w = [T::zero(); 3];
    let mut s = [T::one(); 3];
    let mut c = [T::zero(); 3];
    for d in 0..dim {
        w[d] = T::pi() * T::from_count(j[d] as usize);
        s[d] = trig.s(d, j[d]);
        c[d] = trig.c(d, j[d]);
    }
    // Product of the sine factors over all dimensions except those listed.
    let sines_except = |skip: &[usize]| (0..dim).filter(|d| !skip.contains(d)).fold(T::one(), |acc, d| acc * s[d]);
    let phi = sines_except(&[]);
    let mut grad = [T::zero(); 3];
    let mut hess = [[T::zero(); 3]; 3];
    for p in 0..dim {
        grad[p] = w[p] * c[p] * sines_except(&[p]);
        hess[p][p] = -w[p] * w[p] * phi;
        for e in 0..p {
            let v = w[p] * w[e] * c[p] * c[e] * sines_except(&[p, e]);
            hess[p][e] = v;
            hess[e][p] = v;
        }
    }
    Derivs { grad, hess }
}

/// Applies the curl pattern of potential component `component` to a gradient-like vector.
#[inline]
fn curl<T: Real>(dim: usize, component: u8, g: [T; 3]) -> [T; 3] {
    let z = T::zero();
    if dim == 2 {
        return [g[1], -g[0], z];
    }
    match component {
        1 => [z, g[2], -g[1]],
        2 => [-g[2], z, g[0]],
        _ => [g[1], -g[0], z],
    }
}

#[inline]
fn curl_jacobian<T: Real>(dim: usize, component: u8, hess: &[[T; 3]; 3]) -> [[T; 3]; 3] {
    let mut out = [[T::zero(); 3]; 3];
    for e in 0..dim {
        let col = curl(dim, component, [hess[0][e], hess[1][e], hess[2][e]]);
        for i in 0..dim {
            out[i][e] = col[i];
        }
    }
    out
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("dimension must be 2 or 3, got {dim}")))
    }
}

fn trig_for_mode<T: Real>(dim: usize, mode: &ModeIndex, x: &[T]) -> Trig<T> {
    let mf: Vec<usize> = mode.freq(dim).iter().map(|&j| j as usize).collect();
    Trig::new(&x[..dim], &mf)
}

/// Scalar eigenfunction `prod_d sqrt(2) sin(pi j_d x_d)`.
pub fn eigenfunction<T: Real>(dim: usize, mode: &ModeIndex, x: &[T]) -> T {
    let trig = trig_for_mode(dim, mode, x);
    mode.freq(dim).iter().enumerate().fold(T::one(), |acc, (d, &j)| acc * trig.s(d, j))
}

/// Velocity of a single basis entry at `x`; only the first `dim` components are meaningful.
pub fn basis_field<T: Real>(dim: usize, mode: &ModeIndex, x: &[T]) -> [T; 3] {
    let trig = trig_for_mode(dim, mode, x);
    curl(dim, mode.component, derivs(dim, mode.freq(dim), &trig).grad)
}

/// Analytic spatial Jacobian `D_x v_k(x)`, row = velocity component, column = coordinate.
pub fn basis_field_jacobian<T: Real>(dim: usize, mode: &ModeIndex, x: &[T]) -> [[T; 3]; 3] {
    let trig = trig_for_mode(dim, mode, x);
    curl_jacobian(dim, mode.component, &derivs(dim, mode.freq(dim), &trig).hess)
}

/// Field value, its spatial Jacobian, and optionally every basis column at one point.
#[derive(Clone, Debug)]
pub struct FieldSample<T> {
    pub value: [T; 3],
    pub jacobian: [[T; 3]; 3],
    /// `columns[k * dim + i]` is component `i` of `v_k(x)`; empty unless requested.
    pub columns: Vec<T>,
}

impl<T: Real> DeformationBasis<T> {
    /// First `k` entries ordered by ascending `-lambda^Delta`, ties by `j` then component.
    pub fn enumerate(dim: usize, k: usize, exponent: T) -> Result<Self> {
        check_dim(dim)?;
        if k == 0 {
            return Err(Error::InvalidArgument("basis size K must be at least 1".into()));
        }
        if !(exponent > T::zero()) {
            return Err(Error::InvalidArgument(format!("KL exponent must be positive, got {exponent}")));
        }
        if exponent < T::lit(dim as f64 / 2.0) {
            log::warn!("KL exponent {exponent} below D/2 weakens the smoothness of the prior");
        }
        let per_freq = if dim == 3 { 3 } else { 1 };
        let mut bound = dim as u32;
        let freqs = loop {
            let freqs = frequencies_within(dim, bound);
            if freqs.len() * per_freq >= k {
                break freqs;
            }
            bound += (bound / 4).max(1);
        };
        let mut modes: Vec<ModeIndex> = freqs
            .iter()
            .flat_map(|j| (1..=per_freq as u8).map(move |c| ModeIndex::new(j, c)))
            .collect();
        modes.sort_by(|a, b| a.squared_norm(dim).cmp(&b.squared_norm(dim)).then(a.j.cmp(&b.j)).then(a.component.cmp(&b.component)));
        modes.truncate(k);

        let pi2 = T::pi() * T::pi();
        let entries = modes
            .into_iter()
            .map(|mode| {
                let lap = -pi2 * T::from_count(mode.squared_norm(dim) as usize);
                BasisEntry { mode, laplace_eigenvalue: lap, kl_weight: (-lap).powf(-exponent) }
            })
            .collect::<Vec<_>>();
        let mut max_freq = [0usize; 3];
        for e in &entries {
            for d in 0..dim {
                max_freq[d] = max_freq[d].max(e.mode.j[d] as usize);
            }
        }
        Ok(DeformationBasis { dim, exponent, entries, max_freq })
    }

    /// Default exponent `D / 2`.
    pub fn with_default_exponent(dim: usize, k: usize) -> Result<Self> {
        Self::enumerate(dim, k, T::lit(dim as f64 / 2.0))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn exponent(&self) -> T {
        self.exponent
    }

    pub fn entries(&self) -> &[BasisEntry<T>] {
        &self.entries
    }

    pub fn kl_weights(&self) -> impl Iterator<Item = T> + '_ {
        self.entries.iter().map(|e| e.kl_weight)
    }

    fn check_coefficients(&self, a: &CoefficientVector<T>) -> Result<()> {
        if a.len() != self.len() {
            return Err(Error::InvalidArgument(format!("{} coefficients for a basis of size {}", a.len(), self.len())));
        }
        Ok(())
    }

    /// One pass over all entries at `x`. Consecutive entries that share a
    /// frequency reuse the eigenfunction derivatives.
    pub fn sample(&self, a: &[T], x: &[T], with_columns: bool) -> FieldSample<T> {
        let dim = self.dim;
        let trig = Trig::new(&x[..dim], &self.max_freq[..dim]);
        let mut value = [T::zero(); 3];
        let mut jacobian = [[T::zero(); 3]; 3];
        let mut columns = if with_columns { vec![T::zero(); self.len() * dim] } else { Vec::new() };
        let mut cached: Option<([u32; 3], Derivs<T>)> = None;
        for (k, entry) in self.entries.iter().enumerate() {
            let ak = a[k];
            if ak == T::zero() && !with_columns {
                continue;
            }
            let der = match cached {
                Some((j, d)) if j == entry.mode.j => d,
                _ => {
                    let d = derivs(dim, entry.mode.freq(dim), &trig);
                    cached = Some((entry.mode.j, d));
                    d
                }
            };
            let v = curl(dim, entry.mode.component, der.grad);
            if with_columns {
                columns[k * dim..(k + 1) * dim].copy_from_slice(&v[..dim]);
            }
            if ak != T::zero() {
                for i in 0..dim {
                    value[i] += ak * v[i];
                }
                let jk = curl_jacobian(dim, entry.mode.component, &der.hess);
                for i in 0..dim {
                    for e in 0..dim {
                        jacobian[i][e] += ak * jk[i][e];
                    }
                }
            }
        }
        FieldSample { value, jacobian, columns }
    }

    /// Velocity `v(x) = sum_k a_k v_k(x)`.
    pub fn evaluate_field(&self, a: &CoefficientVector<T>, x: &[T]) -> Result<Vec<T>> {
        self.check_coefficients(a)?;
        if x.len() != self.dim {
            return Err(Error::InvalidArgument(format!("point of length {} for a {}-D basis", x.len(), self.dim)));
        }
        Ok(self.sample(a.as_slice(), x, false).value[..self.dim].to_vec())
    }

    /// Draws `a_k = sqrt(lambda_k) xi_k` with standard normal `xi`, deterministic per seed.
    pub fn sample_prior(&self, rng_seed: u64) -> CoefficientVector<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        CoefficientVector(
            self.entries
                .iter()
                .map(|e| {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    e.kl_weight.sqrt() * T::lit(xi)
                })
                .collect(),
        )
    }

    /// Exact `int_Omega |grad v|^2` for `v = sum_k a_k v_k`.
    ///
    /// Every term is a product of one-dimensional sine/cosine integrals, so the
    /// Gram matrix of the basis gradients is assembled in closed form.
    pub fn dirichlet_energy(&self, a: &CoefficientVector<T>) -> Result<T> {
        self.check_coefficients(a)?;
        let active: Vec<usize> = (0..self.len()).filter(|&k| a.as_slice()[k] != T::zero()).collect();
        let terms: Vec<Vec<SeparableTerm>> = active.iter().map(|&k| gradient_terms(self.dim, &self.entries[k].mode)).collect();
        let mut total = 0.0;
        for (x, &k) in active.iter().enumerate() {
            for (y, &l) in active.iter().enumerate() {
                let g = terms_inner(self.dim, &terms[x], &terms[y]);
                total += a.as_slice()[k].as_f64() * a.as_slice()[l].as_f64() * g;
            }
        }
        Ok(T::lit(total))
    }
}

/// All `j` in `D` dimensions with `j_d >= 1` and `sum_d j_d^2 <= bound`, lexicographic.
fn frequencies_within(dim: usize, bound: u32) -> Vec<Vec<u32>> {
    fn rec(dim: usize, bound: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == dim {
            out.push(prefix.clone());
            return;
        }
        let used: u32 = prefix.iter().map(|j| j * j).sum();
        let remaining_dims = (dim - prefix.len() - 1) as u32;
        let mut j = 1;
        while used + j * j + remaining_dims <= bound {
            prefix.push(j);
            rec(dim, bound, prefix, out);
            prefix.pop();
            j += 1;
        }
    }
    let mut out = Vec::new();
    rec(dim, bound, &mut Vec::new(), &mut out);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Factor {
    Sin,
    Cos,
}

/// `coef * prod_d sqrt(2) f_d(pi j_d x_d)` contributing to component `slot`
/// of `grad v` (slot = velocity component * 3 + derivative direction).
#[derive(Clone, Debug)]
struct SeparableTerm {
    slot: usize,
    coef: f64,
    j: [u32; 3],
    kinds: [Factor; 3],
}

fn gradient_terms(dim: usize, mode: &ModeIndex) -> Vec<SeparableTerm> {
    let w = |d: usize| PI * mode.j[d] as f64;
    // d_e d_p phi as a separable term.
    let second = |p: usize, e: usize| {
        let mut kinds = [Factor::Sin; 3];
        let coef = if p == e {
            -w(p) * w(p)
        } else {
            kinds[p] = Factor::Cos;
            kinds[e] = Factor::Cos;
            w(p) * w(e)
        };
        (coef, kinds)
    };
    let mut out = Vec::new();
    for i in 0..dim {
        for p in 0..dim {
            // Coefficient of d_p phi in velocity component i.
            let mut unit = [0.0f64; 3];
            unit[p] = 1.0;
            let weight = curl(dim, mode.component, unit)[i];
            if weight == 0.0 {
                continue;
            }
            for e in 0..dim {
                let (coef, kinds) = second(p, e);
                out.push(SeparableTerm { slot: i * 3 + e, coef: weight * coef, j: mode.j, kinds });
            }
        }
    }
    out
}

/// `int_0^1 2 f(pi j x) g(pi k x) dx` for sine/cosine factors.
fn factor_integral(f: Factor, j: u32, g: Factor, k: u32) -> f64 {
    match (f, g) {
        (Factor::Sin, Factor::Sin) | (Factor::Cos, Factor::Cos) => {
            if j == k {
                1.0
            } else {
                0.0
            }
        }
        (Factor::Sin, Factor::Cos) => {
            if j == k || (j + k) % 2 == 0 {
                0.0
            } else {
                let (j, k) = (j as f64, k as f64);
                2.0 * 2.0 * j / (PI * (j * j - k * k))
            }
        }
        (Factor::Cos, Factor::Sin) => factor_integral(g, k, f, j),
    }
}

fn terms_inner(dim: usize, a: &[SeparableTerm], b: &[SeparableTerm]) -> f64 {
    let mut total = 0.0;
    for ta in a {
        for tb in b.iter().filter(|t| t.slot == ta.slot) {
            let mut prod = ta.coef * tb.coef;
            for d in 0..dim {
                prod *= factor_integral(ta.kinds[d], ta.j[d], tb.kinds[d], tb.j[d]);
                if prod == 0.0 {
                    break;
                }
            }
            total += prod;
        }
    }
    total
}
