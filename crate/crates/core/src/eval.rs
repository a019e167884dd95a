//! Correspondence and registration quality measures: normalized geodesic
//! error curves and point-to-surface distances.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::path::Path;

use rayon::prelude::*;

use crate::domain::{farthest_point_sample, nearest_to_centroid, Mesh, PointCloud};
use crate::error::{Error, Result};
use crate::format::{fmt_sig9, write_atomic};
use crate::scalar::{dist, Real};
use crate::spatial::PointIndex;

/// Number of farthest-point sources used to estimate each component diameter.
pub const DIAMETER_SOURCES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq)]
struct HeapKey(f64);

impl Eq for HeapKey {}

impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Shortest paths over the edge graph of a mesh, weighted by Euclidean edge length.
#[derive(Clone, Debug)]
pub struct GeodesicIndex<T> {
    adjacency: Vec<Vec<(usize, T)>>,
    component: Vec<usize>,
    diameters: Vec<T>,
}

impl<T: Real> GeodesicIndex<T> {
    pub fn new(mesh: &Mesh<T>) -> Result<Self> {
        let n = mesh.cloud.len();
        if n == 0 {
            return Err(Error::InvalidArgument("mesh has no vertices".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        for (a, b) in mesh.edges() {
            let w = dist(mesh.cloud.point(a), mesh.cloud.point(b));
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        }
        let mut component = vec![usize::MAX; n];
        let mut members: Vec<Vec<usize>> = Vec::new();
        for start in 0..n {
            if component[start] != usize::MAX {
                continue;
            }
            let id = members.len();
            let mut list = vec![start];
            component[start] = id;
            let mut head = 0;
            while head < list.len() {
                let v = list[head];
                head += 1;
                for &(u, _) in &adjacency[v] {
                    if component[u] == usize::MAX {
                        component[u] = id;
                        list.push(u);
                    }
                }
            }
            list.sort_unstable();
            members.push(list);
        }
        let mut index = GeodesicIndex { adjacency, component, diameters: Vec::new() };
        if members.len() > 1 {
            log::warn!("mesh edge graph has {} connected components", members.len());
        }
        index.diameters = members
            .iter()
            .map(|list| {
                let sub = mesh.cloud.select(list);
                let k = DIAMETER_SOURCES.min(list.len());
                let sources = farthest_point_sample(&sub, k, nearest_to_centroid(&sub))?;
                let far = sources
                    .indices
                    .par_iter()
                    .map(|&s| {
                        index.distances_from(list[s]).into_iter().filter(|d| d.is_finite()).fold(T::zero(), |a, b| a.max(b))
                    })
                    .collect::<Vec<T>>();
                Ok(far.into_iter().fold(T::zero(), |a, b| a.max(b)))
            })
            .collect::<Result<Vec<T>>>()?;
        Ok(index)
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn component_count(&self) -> usize {
        self.diameters.len()
    }

    pub fn component_of(&self, v: usize) -> usize {
        self.component[v]
    }

    /// Estimated geodesic diameter of the component containing `v`.
    pub fn diameter_of(&self, v: usize) -> T {
        self.diameters[self.component[v]]
    }

    /// Largest component diameter.
    pub fn diameter(&self) -> T {
        self.diameters.iter().fold(T::zero(), |a, &b| a.max(b))
    }

    fn dijkstra(&self, source: usize, stop_at: Option<usize>) -> Vec<T> {
        let inf = T::max_value().unwrap() * T::lit(2.0);
        let mut d = vec![inf; self.adjacency.len()];
        let mut done = vec![false; self.adjacency.len()];
        let mut heap = BinaryHeap::new();
        d[source] = T::zero();
        heap.push(Reverse((HeapKey(0.0), source)));
        while let Some(Reverse((_, v))) = heap.pop() {
            if done[v] {
                continue;
            }
            done[v] = true;
            if stop_at == Some(v) {
                break;
            }
            for &(u, w) in &self.adjacency[v] {
                let cand = d[v] + w;
                if cand < d[u] {
                    d[u] = cand;
                    heap.push(Reverse((HeapKey(cand.as_f64()), u)));
                }
            }
        }
        d
    }

    /// Geodesic distance from `source` to every vertex; infinite across components.
    pub fn distances_from(&self, source: usize) -> Vec<T> {
        self.dijkstra(source, None)
    }

    fn check(&self, v: usize) -> Result<()> {
        if v >= self.adjacency.len() {
            return Err(Error::InvalidArgument(format!("vertex {v} out of range for {} vertices", self.adjacency.len())));
        }
        Ok(())
    }
}

/// Shortest-path length between two vertices along mesh edges.
pub fn geodesic_distance<T: Real>(index: &GeodesicIndex<T>, u: usize, v: usize) -> Result<T> {
    index.check(u)?;
    index.check(v)?;
    if index.component[u] != index.component[v] {
        return Err(Error::Disconnected(u, v));
    }
    Ok(index.dijkstra(u, Some(v))[v])
}

/// The default threshold grid: 0 to 0.25 in steps of 0.0025.
pub fn default_thresholds<T: Real>() -> Vec<T> {
    (0..=100).map(|i| T::from_count(i) * T::lit(0.0025)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport<T> {
    /// Normalized error per match, in the order of the matches; infinite across components.
    pub per_point_error: Vec<T>,
    /// `(threshold, percentage of matches with error <= threshold)`.
    pub curve: Vec<(T, T)>,
    pub mean_error: T,
}

impl<T: Real> EvalReport<T> {
    /// CSV with a `threshold,percent` header, one row per threshold and a
    /// closing `mean_error=<v>` line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,percent\n");
        for &(t, p) in &self.curve {
            s.push_str(&format!("{},{}\n", fmt_sig9(t.as_f64()), fmt_sig9(p.as_f64())));
        }
        s.push_str(&format!("mean_error={}\n", fmt_sig9(self.mean_error.as_f64())));
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

/// Normalized geodesic error of each match against the ground truth and the
/// cumulative percentage of matches below each threshold.
///
/// The error of a match `x -> y` with true partner `y*` is `d(y, y*) / diam`,
/// using the diameter of the component of `y*`. Matches landing in another
/// component get an infinite error and never count as below a threshold.
pub fn princeton_curve<T: Real>(
    matches: &[(usize, usize)],
    ground_truth: &[(usize, usize)],
    index: &GeodesicIndex<T>,
    thresholds: &[T],
) -> Result<EvalReport<T>> {
    if matches.is_empty() {
        return Err(Error::InvalidArgument("no matches to evaluate".into()));
    }
    let truth: HashMap<usize, usize> = ground_truth.iter().copied().collect();
    if truth.len() != ground_truth.len() {
        return Err(Error::InvalidArgument("ground truth lists a source point twice".into()));
    }
    let mut seen = HashMap::with_capacity(matches.len());
    let mut pairs = Vec::with_capacity(matches.len());
    for &(x, y) in matches {
        let Some(&ys) = truth.get(&x) else {
            return Err(Error::InvalidArgument(format!("source point {x} has no ground truth")));
        };
        if seen.insert(x, ()).is_some() {
            return Err(Error::InvalidArgument(format!("source point {x} is matched twice")));
        }
        index.check(y)?;
        index.check(ys)?;
        pairs.push((y, ys));
    }
    if seen.len() != truth.len() {
        return Err(Error::InvalidArgument("matches and ground truth cover different source points".into()));
    }

    let mut sources: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    sources.sort_unstable();
    sources.dedup();
    let fields: HashMap<usize, Vec<T>> = sources.par_iter().map(|&s| (s, index.distances_from(s))).collect();

    let per_point_error: Vec<T> = pairs
        .iter()
        .map(|&(y, ys)| {
            if index.component[y] != index.component[ys] {
                return T::max_value().unwrap() * T::lit(2.0);
            }
            let d = fields[&ys][y];
            let diam = index.diameter_of(ys);
            if diam > T::zero() {
                d / diam
            } else {
                T::zero()
            }
        })
        .collect();
    let count = T::from_count(per_point_error.len());
    let curve = thresholds
        .iter()
        .map(|&t| {
            let below = per_point_error.iter().filter(|&&e| e <= t).count();
            (t, T::lit(100.0) * T::from_count(below) / count)
        })
        .collect();
    let mean_error = per_point_error.iter().fold(T::zero(), |a, &b| a + b) / count;
    Ok(EvalReport { per_point_error, curve, mean_error })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceDistanceReport<T> {
    pub per_point: Vec<T>,
    pub avg: T,
    pub max: T,
}

fn sub3<T: Real>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot3<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn lerp3<T: Real>(a: [T; 3], u: [T; 3], s: T) -> [T; 3] {
    [a[0] + s * u[0], a[1] + s * u[1], a[2] + s * u[2]]
}

/// Closest point to `p` on the triangle `(a, b, c)`, by Voronoi region of the
/// vertices, edges and face.
pub fn closest_point_on_triangle<T: Real>(p: [T; 3], a: [T; 3], b: [T; 3], c: [T; 3]) -> [T; 3] {
    let ab = sub3(b, a);
    let ac = sub3(c, a);
    let ap = sub3(p, a);
    let d1 = dot3(ab, ap);
    let d2 = dot3(ac, ap);
    if d1 <= T::zero() && d2 <= T::zero() {
        return a;
    }
    let bp = sub3(p, b);
    let d3 = dot3(ab, bp);
    let d4 = dot3(ac, bp);
    if d3 >= T::zero() && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= T::zero() && d1 >= T::zero() && d3 <= T::zero() {
        return lerp3(a, ab, d1 / (d1 - d3));
    }
    let cp = sub3(p, c);
    let d5 = dot3(ab, cp);
    let d6 = dot3(ac, cp);
    if d6 >= T::zero() && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= T::zero() && d2 >= T::zero() && d6 <= T::zero() {
        return lerp3(a, ac, d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= T::zero() && (d4 - d3) >= T::zero() && (d5 - d6) >= T::zero() {
        return lerp3(b, sub3(c, b), (d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = va + vb + vc;
    if denom == T::zero() {
        // Degenerate triangle with all edge tests inconclusive: fall back to the vertices.
        return [a, b, c].into_iter().fold(a, |best, q| if dot3(sub3(p, q), sub3(p, q)) < dot3(sub3(p, best), sub3(p, best)) { q } else { best });
    }
    let v = vb / denom;
    let w = vc / denom;
    [a[0] + ab[0] * v + ac[0] * w, a[1] + ab[1] * v + ac[1] * w, a[2] + ab[2] * v + ac[2] * w]
}

/// Euclidean distance from `p` to the triangle `(a, b, c)`.
pub fn point_triangle_distance<T: Real>(p: [T; 3], a: [T; 3], b: [T; 3], c: [T; 3]) -> T {
    let q = closest_point_on_triangle(p, a, b, c);
    let d = sub3(p, q);
    dot3(d, d).sqrt()
}

fn pad3<T: Real>(p: &[T]) -> [T; 3] {
    let mut out = [T::zero(); 3];
    out[..p.len()].copy_from_slice(p);
    out
}

/// Distance from every registered point to the nearest point on any triangle of the target.
pub fn surface_distance<T: Real>(registered: &PointCloud<T>, target: &Mesh<T>) -> Result<SurfaceDistanceReport<T>> {
    let tris: Vec<[[T; 3]; 3]> = target
        .triangles()
        .into_iter()
        .map(|t| t.map(|v| pad3(target.cloud.point(v))))
        .collect();
    if tris.is_empty() {
        return Err(Error::InvalidArgument("target mesh has no triangles".into()));
    }
    if registered.is_empty() {
        return Err(Error::InvalidArgument("no registered points".into()));
    }
    let third = T::one() / T::lit(3.0);
    let centers: Vec<[T; 3]> = tris
        .iter()
        .map(|t| {
            let mut c = [T::zero(); 3];
            for v in t {
                for d in 0..3 {
                    c[d] += v[d] * third;
                }
            }
            c
        })
        .collect();
    let reach = tris
        .iter()
        .zip(&centers)
        .map(|(t, c)| t.iter().map(|v| dist(v, c)).fold(T::zero(), |a, b| a.max(b)))
        .fold(T::zero(), |a, b| a.max(b));
    let center_cloud = PointCloud::from_points(3, &centers)?;
    let tree = PointIndex::new(&center_cloud);

    let per_point: Vec<T> = (0..registered.len())
        .into_par_iter()
        .map(|i| {
            let p = pad3(registered.point(i));
            let seed = tree.knn(&p, 1)[0];
            let [a, b, c] = tris[seed];
            let mut best = point_triangle_distance(p, a, b, c);
            // Any triangle closer than `best` has its center within `best + reach`.
            let radius = (best + reach).as_f64() * (1.0 + 1e-9) + 1e-12;
            for t in tree.within(&p, radius) {
                let [a, b, c] = tris[t];
                best = best.min(point_triangle_distance(p, a, b, c));
            }
            best
        })
        .collect();
    let avg = per_point.iter().fold(T::zero(), |a, &b| a + b) / T::from_count(per_point.len());
    let max = per_point.iter().fold(T::zero(), |a, &b| a.max(b));
    Ok(SurfaceDistanceReport { per_point, avg, max })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph(n: usize) -> Mesh<f64> {
        let pts: Vec<[f64; 3]> = (0..n).map(|i| [i as f64, 0.0, 0.0]).collect();
        let faces = (0..n - 1).map(|i| vec![i, i + 1]).collect();
        Mesh::new(PointCloud::from_points(3, &pts).unwrap(), faces).unwrap()
    }

    #[test]
    fn path_graph_distances() {
        let idx = GeodesicIndex::new(&path_graph(3)).unwrap();
        assert_eq!(geodesic_distance(&idx, 1, 1).unwrap(), 0.0);
        assert_eq!(geodesic_distance(&idx, 0, 2).unwrap(), 2.0);
        assert_eq!(idx.diameter(), 2.0);
    }

    #[test]
    fn direct_edge_beats_detour() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 3.0, 0.0]];
        let m = Mesh::new(PointCloud::<f64>::from_points(3, &pts).unwrap(), vec![vec![0, 1, 2]]).unwrap();
        let idx = GeodesicIndex::new(&m).unwrap();
        assert_eq!(geodesic_distance(&idx, 0, 1).unwrap(), 1.0);
    }

    #[test]
    fn disconnected_vertices() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [5.0, 0.0, 0.0], [6.0, 0.0, 0.0]];
        let m = Mesh::new(PointCloud::<f64>::from_points(3, &pts).unwrap(), vec![vec![0, 1], vec![2, 3]]).unwrap();
        let idx = GeodesicIndex::new(&m).unwrap();
        assert_eq!(idx.component_count(), 2);
        assert!(matches!(geodesic_distance(&idx, 0, 3), Err(Error::Disconnected(0, 3))));
        let r = princeton_curve(&[(0, 3), (1, 1)], &[(0, 0), (1, 1)], &idx, &[0.0, 1.0]).unwrap();
        assert!(r.per_point_error[0].is_infinite());
        assert_eq!(r.curve, vec![(0.0, 50.0), (1.0, 50.0)]);
    }

    #[test]
    fn four_vertex_fixture() {
        let idx = GeodesicIndex::new(&path_graph(4)).unwrap();
        assert_eq!(idx.diameter(), 3.0);
        let truth = [(0, 0), (1, 1), (2, 2), (3, 3)];
        let matches = [(0, 0), (1, 2), (2, 2), (3, 3)];
        let r = princeton_curve(&matches, &truth, &idx, &[0.0, 0.3, 1.0 / 3.0, 0.5]).unwrap();
        assert_eq!(r.per_point_error, vec![0.0, 1.0 / 3.0, 0.0, 0.0]);
        assert_eq!(r.curve, vec![(0.0, 75.0), (0.3, 75.0), (1.0 / 3.0, 100.0), (0.5, 100.0)]);
        assert_eq!(r.mean_error, 1.0 / 12.0);
    }

    #[test]
    fn perfect_matches_are_constant_100() {
        let idx = GeodesicIndex::new(&path_graph(5)).unwrap();
        let truth: Vec<_> = (0..5).map(|i| (i, 4 - i)).collect();
        let r = princeton_curve(&truth, &truth, &idx, &default_thresholds()).unwrap();
        assert_eq!(r.curve.len(), 101);
        assert!(r.curve.iter().all(|&(_, p)| p == 100.0));
        assert_eq!(r.mean_error, 0.0);
    }

    #[test]
    fn match_at_full_diameter() {
        let idx = GeodesicIndex::new(&path_graph(4)).unwrap();
        let r = princeton_curve(&[(0, 3)], &[(0, 0)], &idx, &[1.0]).unwrap();
        assert_eq!(r.per_point_error, vec![1.0]);
    }

    #[test]
    fn rejects_uncovered_sources() {
        let idx = GeodesicIndex::new(&path_graph(3)).unwrap();
        assert!(princeton_curve(&[(0, 1)], &[(1, 1)], &idx, &[0.0]).is_err());
        assert!(princeton_curve(&[], &[(1, 1)], &idx, &[0.0]).is_err());
    }

    #[test]
    fn csv_layout() {
        let r = EvalReport { per_point_error: vec![0.0], curve: vec![(0.0, 100.0), (0.0025, 100.0)], mean_error: 0.0 };
        assert_eq!(r.to_csv(), "threshold,percent\n0,100\n0.0025,100\nmean_error=0\n");
    }

    fn big_triangle() -> Mesh<f64> {
        let pts = [[-10.0, -10.0, 0.0], [10.0, -10.0, 0.0], [0.0, 10.0, 0.0]];
        Mesh::new(PointCloud::from_points(3, &pts).unwrap(), vec![vec![0, 1, 2]]).unwrap()
    }

    #[test]
    fn height_above_triangle() {
        let p = PointCloud::from_points(3, &[[0.0, 0.0, 0.25], [1.0, -2.0, 0.0]]).unwrap();
        let r = surface_distance(&p, &big_triangle()).unwrap();
        assert_eq!(r.per_point, vec![0.25, 0.0]);
        assert_eq!(r.max, 0.25);
        assert_eq!(r.avg, 0.125);
    }

    #[test]
    fn outside_vertex_region() {
        let d = point_triangle_distance([-11.0, -10.0, 0.0], [-10.0, -10.0, 0.0], [10.0, -10.0, 0.0], [0.0, 10.0, 0.0]);
        assert!((d - 1.0f64).abs() < 1e-12);
    }

    #[test]
    fn faceless_target_is_rejected() {
        let p = PointCloud::<f64>::from_points(3, &[[0.0, 0.0, 0.0]]).unwrap();
        assert!(surface_distance(&p, &path_graph(3)).is_err());
    }
}
