//! Shape ingestion and normalization into the unit domain `[0, 1]^D`.
//!
//! Clouds store their coordinates as one flat row-major buffer so the same
//! code serves `D = 2` and `D = 3`.

mod io;

pub use io::{load_shape, write_shape, ShapeFormat};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{dist2, Real};

/// A finite set of points in `D` dimensions with optional unit normals.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud<T> {
    dim: usize,
    coords: Vec<T>,
    normals: Option<Vec<T>>,
    pub id: String,
}

impl<T: Real> PointCloud<T> {
    /// Builds a cloud from a flat coordinate buffer, checking the invariants.
    pub fn new(dim: usize, coords: Vec<T>, normals: Option<Vec<T>>) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::InvalidArgument(format!("dimension must be 2 or 3, got {dim}")));
        }
        if coords.is_empty() || coords.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "coordinate buffer of length {} is not a nonempty multiple of {dim}",
                coords.len()
            )));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite coordinate in point {}", i / dim)));
        }
        if let Some(n) = &normals {
            if n.len() != coords.len() {
                return Err(Error::InvalidArgument("one normal per point required".into()));
            }
            let tol = T::lit(1e-9);
            for (i, row) in n.chunks_exact(dim).enumerate() {
                let len = crate::scalar::norm(row);
                if (len - T::one()).abs() > tol {
                    return Err(Error::InvalidArgument(format!("normal {i} is not unit length")));
                }
            }
        }
        Ok(PointCloud { dim, coords, normals, id: String::new() })
    }

    pub fn from_points<P: AsRef<[T]>>(dim: usize, points: &[P]) -> Result<Self> {
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::InvalidArgument(format!("point of length {} in {dim}-D cloud", p.len())));
            }
            coords.extend_from_slice(p);
        }
        Self::new(dim, coords, None)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Attaches normals, renormalizing each to unit length.
    pub fn with_normals(self, mut normals: Vec<T>) -> Result<Self> {
        for row in normals.chunks_exact_mut(self.dim) {
            let len = crate::scalar::norm(row);
            if len > T::zero() {
                row.iter_mut().for_each(|c| *c /= len);
            }
        }
        let id = self.id.clone();
        Ok(Self::new(self.dim, self.coords, Some(normals))?.with_id(id))
    }

    pub fn without_normals(mut self) -> Self {
        self.normals = None;
        self
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn normal(&self, i: usize) -> Option<&[T]> {
        self.normals.as_ref().map(|n| &n[i * self.dim..(i + 1) * self.dim])
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, T> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn normals(&self) -> Option<&[T]> {
        self.normals.as_deref()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    pub fn centroid(&self) -> Vec<T> {
        let mut c = vec![T::zero(); self.dim];
        for p in self.points() {
            for (ci, &pi) in c.iter_mut().zip(p) {
                *ci += pi;
            }
        }
        let n = T::from_count(self.len());
        c.iter_mut().for_each(|ci| *ci /= n);
        c
    }

    /// Sub-cloud made of the given indices, in order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        let mut normals = self.normals.as_ref().map(|_| Vec::with_capacity(indices.len() * self.dim));
        for &i in indices {
            coords.extend_from_slice(self.point(i));
            if let (Some(out), Some(n)) = (normals.as_mut(), self.normal(i)) {
                out.extend_from_slice(n);
            }
        }
        PointCloud { dim: self.dim, coords, normals, id: self.id.clone() }
    }

    /// Replaces the coordinates, keeping normals and id. Used by the flow to
    /// produce deformed copies.
    pub(crate) fn with_coords(&self, coords: Vec<T>) -> Self {
        debug_assert_eq!(coords.len(), self.coords.len());
        PointCloud { dim: self.dim, coords, normals: self.normals.clone(), id: self.id.clone() }
    }

    /// Drops the third coordinate of a 3-D cloud whose points all lie in `x3 = 0`.
    pub fn to_planar(&self) -> Result<Self> {
        if self.dim == 2 {
            return Ok(self.clone());
        }
        if self.points().any(|p| p[2] != T::zero()) {
            return Err(Error::InvalidArgument(format!("cloud `{}` is not planar (x3 != 0)", self.id)));
        }
        let coords = self.points().flat_map(|p| [p[0], p[1]]).collect();
        Ok(PointCloud { dim: 2, coords, normals: None, id: self.id.clone() })
    }
}

/// A point cloud with face connectivity. Faces are vertex-index polygons
/// (triangles or larger), or index pairs forming polylines in 2-D.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh<T> {
    pub cloud: PointCloud<T>,
    faces: Vec<Vec<usize>>,
}

impl<T: Real> Mesh<T> {
    pub fn new(cloud: PointCloud<T>, faces: Vec<Vec<usize>>) -> Result<Self> {
        let n = cloud.len();
        for (fi, face) in faces.iter().enumerate() {
            if face.len() < 2 {
                return Err(Error::InvalidArgument(format!("face {fi} has fewer than two vertices")));
            }
            if let Some(&bad) = face.iter().find(|&&v| v >= n) {
                return Err(Error::InvalidArgument(format!("face {fi} references vertex {bad} of {n}")));
            }
            for (a, &va) in face.iter().enumerate() {
                if face[a + 1..].contains(&va) {
                    return Err(Error::InvalidArgument(format!("face {fi} repeats vertex {va}")));
                }
            }
        }
        Ok(Mesh { cloud, faces })
    }

    pub fn faces(&self) -> &[Vec<usize>] {
        &self.faces
    }

    /// Fan triangulation of every polygon face with at least three vertices.
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        let mut out = Vec::new();
        for f in &self.faces {
            for i in 1..f.len().saturating_sub(1) {
                out.push([f[0], f[i], f[i + 1]]);
            }
        }
        out
    }

    /// Undirected edges of all faces, deduplicated and sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for f in &self.faces {
            let closed = f.len() > 2;
            let count = if closed { f.len() } else { f.len() - 1 };
            for i in 0..count {
                let (a, b) = (f[i], f[(i + 1) % f.len()]);
                out.push((a.min(b), a.max(b)));
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Shared similarity transform mapping both shapes into the unit domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainTransform<T> {
    pub scale: T,
    pub translation: Vec<T>,
}

impl<T: Real> DomainTransform<T> {
    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn forward_point(&self, p: &[T], out: &mut [T]) {
        for d in 0..self.dim() {
            out[d] = self.scale * p[d] + self.translation[d];
        }
    }

    pub fn inverse_point(&self, p: &[T], out: &mut [T]) {
        for d in 0..self.dim() {
            out[d] = (p[d] - self.translation[d]) / self.scale;
        }
    }

    pub fn apply(&self, cloud: &PointCloud<T>) -> PointCloud<T> {
        let mut coords = cloud.coords.clone();
        for (p, out) in cloud.points().zip(coords.chunks_exact_mut(cloud.dim)) {
            self.forward_point(p, out);
        }
        cloud.with_coords(coords)
    }

    pub fn apply_inverse(&self, cloud: &PointCloud<T>) -> PointCloud<T> {
        let mut coords = cloud.coords.clone();
        for (p, out) in cloud.points().zip(coords.chunks_exact_mut(cloud.dim)) {
            self.inverse_point(p, out);
        }
        cloud.with_coords(coords)
    }
}

/// Indices picked by farthest point sampling, in selection order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleIndexSet {
    pub indices: Vec<usize>,
}

impl SampleIndexSet {
    pub fn count(&self) -> usize {
        self.indices.len()
    }
}

/// Rigid PCA alignment of a single cloud: returns the aligned cloud and the
/// proper rotation whose rows are the principal axes.
pub fn pca_align_one<T: Real>(cloud: &PointCloud<T>) -> Result<(PointCloud<T>, DMatrix<T>)> {
    let dim = cloud.dim();
    let mean = cloud.centroid();
    let n = T::from_count(cloud.len());
    let mut cov = DMatrix::<T>::zeros(dim, dim);
    for p in cloud.points() {
        for a in 0..dim {
            for b in 0..dim {
                cov[(a, b)] += (p[a] - mean[a]) * (p[b] - mean[b]);
            }
        }
    }
    cov /= n;

    let eig = SymmetricEigen::new(cov);
    let largest = eig.eigenvalues.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    let smallest = eig.eigenvalues.iter().fold(largest, |m, &v| m.min(v));
    if largest <= T::zero() || smallest <= largest * T::lit(1e-12) {
        return Err(Error::DegenerateCovariance(cloud.id.clone()));
    }

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());

    // Rows of `rot` are the principal axes, descending variance.
    let mut rot = DMatrix::<T>::zeros(dim, dim);
    let mut moments = vec![T::zero(); dim];
    for (row, &col) in order.iter().enumerate() {
        let axis = eig.eigenvectors.column(col);
        let mut m3 = T::zero();
        for p in cloud.points() {
            let proj = (0..dim).fold(T::zero(), |acc, d| acc + (p[d] - mean[d]) * axis[d]);
            m3 += proj * proj * proj;
        }
        m3 /= n;
        let flip = if m3.abs() <= T::lit(1e-12) {
            // Keep the orientation whose dominant component is positive.
            let dominant = (0..dim)
                .max_by(|&a, &b| axis[a].abs().partial_cmp(&axis[b].abs()).unwrap().then(b.cmp(&a)))
                .unwrap();
            axis[dominant] < T::zero()
        } else {
            m3 < T::zero()
        };
        let sign = if flip { -T::one() } else { T::one() };
        for d in 0..dim {
            rot[(row, d)] = sign * axis[d];
        }
        moments[row] = sign * m3;
    }
    if rot.determinant() < T::zero() {
        // Flip the axis whose sign was decided with the least confidence.
        let weakest = (0..dim)
            .min_by(|&a, &b| moments[a].abs().partial_cmp(&moments[b].abs()).unwrap().then(b.cmp(&a)))
            .unwrap();
        for d in 0..dim {
            rot[(weakest, d)] = -rot[(weakest, d)];
        }
    }

    let mut coords = Vec::with_capacity(cloud.coords.len());
    let centered = |p: &[T]| DVector::from_iterator(dim, (0..dim).map(|d| p[d] - mean[d]));
    for p in cloud.points() {
        let q = &rot * centered(p);
        coords.extend(q.iter().copied());
    }
    let normals = cloud.normals.as_ref().map(|ns| {
        ns.chunks_exact(dim)
            .flat_map(|nv| (&rot * DVector::from_column_slice(nv)).iter().copied().collect::<Vec<_>>())
            .collect()
    });
    Ok((PointCloud { dim, coords, normals, id: cloud.id.clone() }, rot))
}

/// Aligns each cloud independently to its principal axes, centered at the origin.
pub fn pca_align<T: Real>(
    source: &PointCloud<T>,
    target: &PointCloud<T>,
) -> Result<(PointCloud<T>, PointCloud<T>)> {
    Ok((pca_align_one(source)?.0, pca_align_one(target)?.0))
}

/// Computes the single transform placing both clouds inside `[margin, 1 - margin]^D`
/// with their joint mean at the domain center.
pub fn fit_domain<T: Real>(
    source: &PointCloud<T>,
    target: &PointCloud<T>,
    margin: T,
) -> Result<DomainTransform<T>> {
    if !(margin > T::zero() && margin < T::lit(0.5)) {
        return Err(Error::InvalidArgument(format!("margin must lie in (0, 0.5), got {margin}")));
    }
    if source.dim() != target.dim() {
        return Err(Error::InvalidArgument("source and target dimensions differ".into()));
    }
    let dim = source.dim();
    let total = T::from_count(source.len() + target.len());
    let mut mean = vec![T::zero(); dim];
    for p in source.points().chain(target.points()) {
        for d in 0..dim {
            mean[d] += p[d];
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);

    let mut reach = T::zero();
    for p in source.points().chain(target.points()) {
        for d in 0..dim {
            reach = reach.max((p[d] - mean[d]).abs());
        }
    }
    let half = T::lit(0.5);
    let scale = if reach > T::zero() { (half - margin) / reach } else { T::one() };
    let translation = mean.iter().map(|&m| half - scale * m).collect();
    Ok(DomainTransform { scale, translation })
}

/// Index of the point closest to the centroid (lowest index on ties).
pub fn nearest_to_centroid<T: Real>(cloud: &PointCloud<T>) -> usize {
    let c = cloud.centroid();
    let mut best = (0, T::max_value().unwrap());
    for (i, p) in cloud.points().enumerate() {
        let d = dist2(p, &c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// Greedy Euclidean farthest point sampling.
///
/// `seed_index` only anchors the start: the first selected point is the one
/// farthest from the seed, after which each step appends the point maximizing
/// the minimum distance to the selected set. Ties go to the lowest index.
pub fn farthest_point_sample<T: Real>(cloud: &PointCloud<T>, k: usize, seed_index: usize) -> Result<SampleIndexSet> {
    let n = cloud.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("sample count {k} not in 1..={n}")));
    }
    if seed_index >= n {
        return Err(Error::InvalidArgument(format!("seed index {seed_index} out of range")));
    }
    let seed = cloud.point(seed_index);
    let mut current = 0;
    let mut far = T::zero();
    for i in 0..n {
        let d = dist2(cloud.point(i), seed);
        if d > far {
            far = d;
            current = i;
        }
    }
    let mut indices = Vec::with_capacity(k);
    let mut min_d2 = vec![T::max_value().unwrap(); n];
    let mut selected = vec![false; n];
    loop {
        indices.push(current);
        selected[current] = true;
        if indices.len() == k {
            break;
        }
        let c = cloud.point(current);
        let mut best: Option<(usize, T)> = None;
        for i in 0..n {
            if selected[i] {
                continue;
            }
            let d = dist2(cloud.point(i), c);
            if d < min_d2[i] {
                min_d2[i] = d;
            }
            if best.map_or(true, |(_, bd)| min_d2[i] > bd) {
                best = Some((i, min_d2[i]));
            }
        }
        current = best.expect("k <= n leaves a candidate").0;
    }
    Ok(SampleIndexSet { indices })
}
