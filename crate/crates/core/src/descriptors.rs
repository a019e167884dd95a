//! Per-point feature descriptors and the combined Euclidean + descriptor distance.
//!
//! The descriptor is a reduced signature-of-histograms: around each point a
//! local reference frame is fixed from the neighborhood covariance, the
//! neighborhood ball is split into radial x azimuth x elevation sectors, and
//! each sector holds a histogram of the cosine between the point's normal and
//! its neighbors' normals. Externally computed descriptors can be ingested
//! instead through [`load_descriptors`].

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::domain::PointCloud;
use crate::error::{Error, Result};
use crate::format::{fmt_sig9, write_atomic};
use crate::scalar::{dist, dot, Real};
use crate::spatial::PointIndex;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DescriptorProvenance {
    Computed,
    Ingested,
    None,
}

/// One descriptor row per point.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorSet<T> {
    rows: usize,
    width: usize,
    values: Vec<T>,
    pub provenance: DescriptorProvenance,
}

impl<T: Real> DescriptorSet<T> {
    pub fn new(rows: usize, width: usize, values: Vec<T>, provenance: DescriptorProvenance) -> Result<Self> {
        if values.len() != rows * width {
            return Err(Error::InvalidArgument(format!("{} values for a {rows}x{width} descriptor set", values.len())));
        }
        if provenance != DescriptorProvenance::None && width == 0 {
            return Err(Error::InvalidArgument("descriptor width must be at least 1".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite descriptor entry".into()));
        }
        Ok(DescriptorSet { rows, width, values, provenance })
    }

    /// Placeholder for `rows` points without descriptors.
    pub fn none(rows: usize) -> Self {
        DescriptorSet { rows, width: 0, values: Vec::new(), provenance: DescriptorProvenance::None }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_none(&self) -> bool {
        self.provenance == DescriptorProvenance::None
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    /// Rows at the given indices, in order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.width);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        DescriptorSet { rows: indices.len(), width: self.width, values, provenance: self.provenance }
    }
}

/// Spatial and cosine bin counts of the computed descriptor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DescriptorBins {
    pub radial: usize,
    pub azimuth: usize,
    pub elevation: usize,
    pub cosine: usize,
}

impl Default for DescriptorBins {
    fn default() -> Self {
        DescriptorBins { radial: 2, azimuth: 4, elevation: 2, cosine: 8 }
    }
}

impl DescriptorBins {
    pub fn width(&self) -> usize {
        self.radial * self.azimuth * self.elevation * self.cosine
    }
}

/// Smallest-eigenvalue direction of the covariance of each point's
/// neighborhood (the point plus its `k_neighbors` nearest neighbors).
///
/// Each normal is oriented to point from the cloud centroid towards the
/// local centroid; when those coincide in the normal direction the largest
/// component is made positive.
pub fn estimate_normals<T: Real>(cloud: &PointCloud<T>, k_neighbors: usize) -> Result<PointCloud<T>> {
    if k_neighbors < 3 {
        return Err(Error::InvalidArgument(format!("at least 3 neighbors required, got {k_neighbors}")));
    }
    let dim = cloud.dim();
    let index = PointIndex::new(cloud);
    let center = cloud.centroid();
    let normals: Vec<Result<Vec<T>>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let nb = index.knn(cloud.point(i), (k_neighbors + 1).min(cloud.len()));
            let count = T::from_count(nb.len());
            let mut local = vec![T::zero(); dim];
            for &j in &nb {
                for d in 0..dim {
                    local[d] += cloud.point(j)[d] / count;
                }
            }
            let mut cov = DMatrix::<T>::zeros(dim, dim);
            for &j in &nb {
                let p = cloud.point(j);
                for a in 0..dim {
                    for b in 0..dim {
                        cov[(a, b)] += (p[a] - local[a]) * (p[b] - local[b]);
                    }
                }
            }
            let eig = SymmetricEigen::new(cov);
            let mut order: Vec<usize> = (0..dim).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
            let largest = eig.eigenvalues[order[dim - 1]];
            // The tangent space must be (D-1)-dimensional.
            if largest <= T::zero() || eig.eigenvalues[order[1]] <= largest * T::lit(1e-10) {
                return Err(Error::DegenerateNeighborhood(i));
            }
            let mut n: Vec<T> = eig.eigenvectors.column(order[0]).iter().copied().collect();
            let outward: Vec<T> = (0..dim).map(|d| local[d] - center[d]).collect();
            let s = dot(&n, &outward);
            let flip = if s.abs() > T::lit(1e-9) * crate::scalar::norm(&outward) {
                s < T::zero()
            } else {
                let dominant = (0..dim)
                    .max_by(|&a, &b| n[a].abs().partial_cmp(&n[b].abs()).unwrap().then(b.cmp(&a)))
                    .unwrap();
                n[dominant] < T::zero()
            };
            if flip {
                n.iter_mut().for_each(|c| *c = -*c);
            }
            Ok(n)
        })
        .collect();
    let mut flat = Vec::with_capacity(cloud.coords().len());
    for n in normals {
        flat.extend(n?);
    }
    cloud.clone().with_normals(flat)
}

/// Local reference frame: principal axes of the distance-weighted neighborhood
/// covariance, x = largest and z = smallest variance, each sign chosen so
/// most neighbors have a nonnegative projection.
fn local_frame<T: Real>(cloud: &PointCloud<T>, i: usize, nb: &[usize], radius: T) -> [[T; 3]; 3] {
    let dim = cloud.dim();
    let p = cloud.point(i);
    let mut cov = DMatrix::<T>::zeros(3, 3);
    let mut wsum = T::zero();
    let offsets: Vec<[T; 3]> = nb
        .iter()
        .map(|&j| {
            let mut o = [T::zero(); 3];
            for d in 0..dim {
                o[d] = cloud.point(j)[d] - p[d];
            }
            o
        })
        .collect();
    for o in &offsets {
        let w = radius - crate::scalar::norm(o);
        wsum += w;
        for a in 0..3 {
            for b in 0..3 {
                cov[(a, b)] += w * o[a] * o[b];
            }
        }
    }
    if wsum > T::zero() {
        cov /= wsum;
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap().then(a.cmp(&b)));
    let axis = |c: usize| {
        let col = eig.eigenvectors.column(c);
        let mut v = [col[0], col[1], col[2]];
        let mut positive = 0i64;
        let mut sum = T::zero();
        for o in &offsets {
            let s = o[0] * v[0] + o[1] * v[1] + o[2] * v[2];
            sum += s;
            positive += if s >= T::zero() { 1 } else { -1 };
        }
        let flip = match positive {
            0 => sum < T::zero() || (sum == T::zero() && v.iter().fold(T::zero(), |a, &b| a + b) < T::zero()),
            p => p < 0,
        };
        if flip {
            v.iter_mut().for_each(|c| *c = -*c);
        }
        v
    };
    let x = axis(order[0]);
    let z = axis(order[2]);
    let y = [z[1] * x[2] - z[2] * x[1], z[2] * x[0] - z[0] * x[2], z[0] * x[1] - z[1] * x[0]];
    [x, y, z]
}

/// Simplified signature-of-histograms descriptor for every point. Rows are
/// unit length, or all zero for points with no neighbor inside `radius`.
pub fn compute_descriptors<T: Real>(cloud: &PointCloud<T>, radius: T, bins: DescriptorBins) -> Result<DescriptorSet<T>> {
    if !cloud.has_normals() {
        return Err(Error::InvalidArgument("descriptors need normals; estimate them first".into()));
    }
    if !(radius > T::zero()) {
        return Err(Error::InvalidArgument(format!("descriptor radius must be positive, got {radius}")));
    }
    let width = bins.width();
    if width == 0 {
        return Err(Error::InvalidArgument("descriptor bins must be positive".into()));
    }
    let dim = cloud.dim();
    let index = PointIndex::new(cloud);
    let rows: Vec<Vec<T>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let p = cloud.point(i);
            let nb: Vec<usize> = index
                .within(p, radius.as_f64())
                .into_iter()
                .filter(|&j| j != i && dist(cloud.point(j), p) <= radius)
                .collect();
            let mut hist = vec![T::zero(); width];
            if nb.is_empty() {
                return hist;
            }
            let frame = local_frame(cloud, i, &nb, radius);
            let n_i = cloud.normal(i).unwrap();
            let half = radius * T::lit(0.5);
            for &j in &nb {
                let q = cloud.point(j);
                let mut o = [T::zero(); 3];
                for d in 0..dim {
                    o[d] = q[d] - p[d];
                }
                let local: Vec<T> = frame.iter().map(|ax| ax[0] * o[0] + ax[1] * o[1] + ax[2] * o[2]).collect();
                let r = dist(q, p);
                let rb = if bins.radial > 1 && r >= half { bins.radial - 1 } else { 0 };
                let angle = local[1].atan2(local[0]) + T::pi();
                let ab = ((angle / T::two_pi() * T::from_count(bins.azimuth)).floor().as_f64().max(0.0) as usize)
                    .min(bins.azimuth - 1);
                let eb = if bins.elevation > 1 && local[2] >= T::zero() { bins.elevation - 1 } else { 0 };
                let cosine = dot(n_i, cloud.normal(j).unwrap()).max(-T::one()).min(T::one());
                let cb = (((cosine + T::one()) * T::lit(0.5) * T::from_count(bins.cosine)).floor().as_f64().max(0.0)
                    as usize)
                    .min(bins.cosine - 1);
                let spatial = (rb * bins.azimuth + ab) * bins.elevation + eb;
                hist[spatial * bins.cosine + cb] += T::one();
            }
            let len = crate::scalar::norm(&hist);
            hist.iter_mut().for_each(|h| *h /= len);
            hist
        })
        .collect();
    DescriptorSet::new(cloud.len(), width, rows.concat(), DescriptorProvenance::Computed)
}

const DESC_MAGIC: &str = "MORPHFLOW-DESC v1";

/// Reads `MORPHFLOW-DESC v1 <N> <F>` followed by `N` comma-separated rows.
pub fn load_descriptors<T: Real>(path: &Path, expected_n: usize) -> Result<DescriptorSet<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let (hl, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty descriptor file"))?;
    let rest = header
        .strip_prefix(DESC_MAGIC)
        .ok_or_else(|| Error::parse(path, hl, format!("expected `{DESC_MAGIC} <N> <F>` header")))?;
    let dims: Vec<usize> = rest
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::parse(path, hl, format!("bad header count `{t}`"))))
        .collect::<Result<_>>()?;
    let [n, f] = dims[..] else {
        return Err(Error::parse(path, hl, "header needs exactly two counts"));
    };
    if f == 0 {
        return Err(Error::parse(path, hl, "descriptor width must be positive"));
    }
    let mut values = Vec::with_capacity(n * f);
    let mut rows = 0;
    for (l, line) in lines {
        let before = values.len();
        for tok in line.split(',') {
            let tok = tok.trim();
            let v: f64 = tok.parse().map_err(|_| Error::parse(path, l, format!("`{tok}` is not a number")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, l, "non-finite descriptor entry"));
            }
            values.push(T::lit(v));
        }
        if values.len() - before != f {
            return Err(Error::parse(path, l, format!("row has {} entries, header says {f}", values.len() - before)));
        }
        rows += 1;
    }
    if rows != n || rows != expected_n {
        return Err(Error::RowCountMismatch { expected: expected_n, found: rows });
    }
    DescriptorSet::new(rows, f, values, DescriptorProvenance::Ingested)
}

/// Writes the descriptor CSV with 9 significant digits.
pub fn write_descriptors<T: Real>(path: &Path, set: &DescriptorSet<T>) -> Result<()> {
    let mut s = format!("{DESC_MAGIC} {} {}\n", set.rows, set.width);
    for i in 0..set.rows {
        let row = set.row(i);
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                s.push(',');
            }
            let _ = write!(s, "{}", fmt_sig9(v.as_f64()));
        }
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

/// Normalizers and pairwise descriptor distances for the combined metric
/// `d = d_euclid + (mean_euclid / mean_descriptor) d_descriptor`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceModel<T> {
    pub mean_euclid: T,
    pub mean_descriptor: T,
    n: usize,
    m: usize,
    /// Row-major `n x m`; empty when no descriptors are used.
    descriptor_distances: Vec<T>,
}

fn pairwise_descriptor_distances<T: Real>(a: &DescriptorSet<T>, b: &DescriptorSet<T>) -> Vec<T> {
    (0..a.rows())
        .into_par_iter()
        .flat_map_iter(|n| (0..b.rows()).map(move |m| dist(a.row(n), b.row(m))))
        .collect()
}

/// Arithmetic mean of a row-major matrix, summed row by row.
fn mean_of<T: Real>(values: &[T], cols: usize) -> T {
    if values.is_empty() {
        return T::zero();
    }
    let total = values.chunks(cols.max(1)).fold(0.0, |acc, row| acc + row.iter().map(|v| v.as_f64()).sum::<f64>());
    T::lit(total / values.len() as f64)
}

/// Builds the metric once from the initial positions; it stays fixed through EM.
pub fn build_distance_model<T: Real>(
    f_points: &PointCloud<T>,
    y_points: &PointCloud<T>,
    desc_x: &DescriptorSet<T>,
    desc_y: &DescriptorSet<T>,
) -> Result<DistanceModel<T>> {
    let (n, m) = (f_points.len(), y_points.len());
    if f_points.dim() != y_points.dim() {
        return Err(Error::InvalidArgument("source and target dimensions differ".into()));
    }
    if desc_x.is_none() != desc_y.is_none() {
        return Err(Error::InvalidArgument("descriptors must be present for both clouds or neither".into()));
    }
    let use_desc = !desc_x.is_none();
    if use_desc {
        if desc_x.width() != desc_y.width() {
            return Err(Error::InvalidArgument(format!(
                "descriptor widths differ: {} vs {}",
                desc_x.width(),
                desc_y.width()
            )));
        }
        if desc_x.rows() != n || desc_y.rows() != m {
            return Err(Error::RowCountMismatch { expected: n, found: desc_x.rows() });
        }
    }
    let euclid: Vec<T> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| (0..m).map(move |j| dist(f_points.point(i), y_points.point(j))))
        .collect();
    let mean_euclid = mean_of(&euclid, m);
    let (mean_descriptor, descriptor_distances) = if use_desc {
        let dd = pairwise_descriptor_distances(desc_x, desc_y);
        (mean_of(&dd, m), dd)
    } else {
        (T::zero(), Vec::new())
    };
    Ok(DistanceModel { mean_euclid, mean_descriptor, n, m, descriptor_distances })
}

impl<T: Real> DistanceModel<T> {
    /// Pure Euclidean model for `n x m` clouds.
    pub fn euclidean(n: usize, m: usize) -> Self {
        DistanceModel { mean_euclid: T::zero(), mean_descriptor: T::zero(), n, m, descriptor_distances: Vec::new() }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    /// Weight multiplying the descriptor distance; zero when the descriptor
    /// term is disabled or degenerate.
    pub fn descriptor_scale(&self) -> T {
        if self.descriptor_distances.is_empty() || self.mean_descriptor <= T::lit(1e-12) {
            T::zero()
        } else {
            self.mean_euclid / self.mean_descriptor
        }
    }

    pub fn descriptor_distance(&self, n: usize, m: usize) -> T {
        if self.descriptor_distances.is_empty() {
            T::zero()
        } else {
            self.descriptor_distances[n * self.m + m]
        }
    }

    /// Combined distance given an already computed Euclidean distance.
    #[inline]
    pub fn combine(&self, n: usize, m: usize, euclid: T) -> T {
        let s = self.descriptor_scale();
        if s == T::zero() {
            euclid
        } else {
            euclid + s * self.descriptor_distances[n * self.m + m]
        }
    }

    pub fn combined_distance(&self, n: usize, m: usize, f_n: &[T], y_m: &[T]) -> T {
        self.combine(n, m, dist(f_n, y_m))
    }

    /// Multiplies every stored descriptor distance (and their mean) by `factor`.
    pub fn rescale_descriptors(&mut self, factor: T) {
        self.descriptor_distances.iter_mut().for_each(|d| *d *= factor);
        self.mean_descriptor *= factor;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, seed: u64) -> PointCloud<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<[f64; 3]> = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        PointCloud::from_points(3, &pts).unwrap()
    }

    #[test]
    fn plane_normals() {
        let mut pts = Vec::new();
        for i in 0..8 {
            for j in 0..8 {
                pts.push([i as f64 * 0.1, j as f64 * 0.13, 0.25]);
            }
        }
        let c = estimate_normals(&PointCloud::from_points(3, &pts).unwrap(), 6).unwrap();
        for i in 0..c.len() {
            let n = c.normal(i).unwrap();
            assert!((n[2] - 1.0).abs() < 1e-6, "{n:?}");
        }
    }

    #[test]
    fn sphere_normals_are_radial() {
        // Fibonacci sphere.
        let n = 400;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let pts: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let th = golden * i as f64;
                [r * th.cos(), r * th.sin(), z]
            })
            .collect();
        let c = estimate_normals(&PointCloud::from_points(3, &pts).unwrap(), 8).unwrap();
        for (i, p) in pts.iter().enumerate() {
            let cosang = dot(c.normal(i).unwrap(), p);
            assert!(cosang > 5f64.to_radians().cos(), "point {i}: cos {cosang}");
        }
    }

    #[test]
    fn collinear_is_degenerate() {
        let c = PointCloud::from_points(3, &[[0.0; 3], [1.0, 1.0, 1.0], [2.0, 2.0, 2.0]]).unwrap();
        assert!(matches!(estimate_normals(&c, 3), Err(Error::DegenerateNeighborhood(_))));
    }

    #[test]
    fn isolated_point_has_zero_descriptor() {
        let c = PointCloud::from_points(3, &[[0.0; 3], [1.0, 1.0, 1.0]]).unwrap().with_normals(vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let d = compute_descriptors(&c, 0.1, DescriptorBins::default()).unwrap();
        assert_eq!(d.width(), 128);
        assert!(d.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn descriptor_rows_unit_or_zero() {
        let c = estimate_normals(&random_cloud(300, 1), 10).unwrap();
        let d = compute_descriptors(&c, 0.2, DescriptorBins::default()).unwrap();
        for i in 0..d.rows() {
            let n = crate::scalar::norm(d.row(i));
            assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_clouds_have_zero_matched_distance() {
        let c = estimate_normals(&random_cloud(100, 2), 10).unwrap();
        let d = compute_descriptors(&c, 0.25, DescriptorBins::default()).unwrap();
        let model = build_distance_model(&c, &c, &d, &d).unwrap();
        for i in 0..c.len() {
            assert_eq!(model.descriptor_distance(i, i), 0.0);
            assert_eq!(model.combined_distance(i, i, c.point(i), c.point(i)), 0.0);
        }
    }

    #[test]
    fn single_pair_model() {
        let x = PointCloud::from_points(3, &[[0.0, 0.0, 0.0]]).unwrap();
        let y = PointCloud::from_points(3, &[[0.2, 0.0, 0.0]]).unwrap();
        let dx = DescriptorSet::new(1, 2, vec![0.0, 0.0], DescriptorProvenance::Ingested).unwrap();
        let dy = DescriptorSet::new(1, 2, vec![4.0, 0.0], DescriptorProvenance::Ingested).unwrap();
        let m = build_distance_model(&x, &y, &dx, &dy).unwrap();
        assert!((m.mean_euclid - 0.2f64).abs() < 1e-15);
        assert_eq!(m.mean_descriptor, 4.0);
    }

    #[test]
    fn combined_distance_example() {
        let m = DistanceModel::<f64> { mean_euclid: 0.2, mean_descriptor: 4.0, n: 1, m: 1, descriptor_distances: vec![2.0] };
        let d = m.combined_distance(0, 0, &[0.0, 0.0, 0.0], &[0.1, 0.0, 0.0]);
        assert!((d - 0.2f64).abs() < 1e-15);
    }

    #[test]
    fn no_descriptors_is_euclidean() {
        let x = random_cloud(5, 3);
        let y = random_cloud(6, 4);
        let m = build_distance_model(&x, &y, &DescriptorSet::none(5), &DescriptorSet::none(6)).unwrap();
        assert_eq!(m.mean_descriptor, 0.0);
        assert_eq!(m.combined_distance(1, 2, x.point(1), y.point(2)), dist(x.point(1), y.point(2)));
        let zero = DescriptorSet::new(5, 3, vec![0.0; 15], DescriptorProvenance::Computed).unwrap();
        let zero_y = DescriptorSet::new(6, 3, vec![0.0; 18], DescriptorProvenance::Computed).unwrap();
        let m = build_distance_model(&x, &y, &zero, &zero_y).unwrap();
        assert_eq!(m.combined_distance(1, 2, x.point(1), y.point(2)), dist(x.point(1), y.point(2)));
    }

    #[test]
    fn mismatched_widths_rejected() {
        let x = random_cloud(2, 5);
        let dx = DescriptorSet::new(2, 2, vec![0.0; 4], DescriptorProvenance::Ingested).unwrap();
        let dy = DescriptorSet::new(2, 3, vec![0.0; 6], DescriptorProvenance::Ingested).unwrap();
        assert!(build_distance_model(&x, &x, &dx, &dy).is_err());
    }

    #[test]
    fn descriptor_file_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "MORPHFLOW-DESC v1 2 3\n1,2,3\n4,5,6\n").unwrap();
        let d: DescriptorSet<f64> = load_descriptors(&p, 2).unwrap();
        assert_eq!((d.rows(), d.width()), (2, 3));
        assert_eq!(d.provenance, DescriptorProvenance::Ingested);
        assert!(matches!(load_descriptors::<f64>(&p, 3), Err(Error::RowCountMismatch { .. })));
        std::fs::write(&p, "MORPHFLOW-DESC v1 2 3\n1,2,3\n").unwrap();
        assert!(matches!(load_descriptors::<f64>(&p, 2), Err(Error::RowCountMismatch { .. })));
        std::fs::write(&p, "MORPHFLOW-DESC v1 1 3\n1,2\n").unwrap();
        assert!(matches!(load_descriptors::<f64>(&p, 1), Err(Error::Parse { line: 2, .. })));
        std::fs::write(&p, "DESC 1 3\n1,2,3\n").unwrap();
        assert!(matches!(load_descriptors::<f64>(&p, 1), Err(Error::Parse { line: 1, .. })));
    }
}
