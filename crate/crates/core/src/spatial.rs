//! Neighbor queries over a point cloud, backed by an immutable k-d tree.

use std::num::NonZeroUsize;

use kiddo::{ImmutableKdTree, SquaredEuclidean};

use crate::domain::PointCloud;
use crate::scalar::Real;

pub(crate) struct PointIndex {
    tree: ImmutableKdTree<f64, 3>,
}

fn padded<T: Real>(p: &[T]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (o, &c) in out.iter_mut().zip(p) {
        *o = c.as_f64();
    }
    out
}

impl PointIndex {
    pub fn new<T: Real>(cloud: &PointCloud<T>) -> Self {
        let pts: Vec<[f64; 3]> = cloud.points().map(padded).collect();
        PointIndex { tree: ImmutableKdTree::new_from_slice(&pts) }
    }

    /// The `k` nearest points (the query point itself included when it is in
    /// the cloud), closest first, ties by index.
    pub fn knn<T: Real>(&self, q: &[T], k: usize) -> Vec<usize> {
        let Some(k) = NonZeroUsize::new(k) else { return Vec::new() };
        let mut found = self.tree.nearest_n::<SquaredEuclidean>(&padded(q), k);
        found.sort_by(|a, b| a.distance.partial_cmp(&b.distance).unwrap().then(a.item.cmp(&b.item)));
        found.into_iter().map(|n| n.item as usize).collect()
    }

    /// Indices within Euclidean distance `radius`, ascending.
    pub fn within<T: Real>(&self, q: &[T], radius: f64) -> Vec<usize> {
        let mut idx: Vec<usize> = self
            .tree
            .within_unsorted::<SquaredEuclidean>(&padded(q), radius * radius)
            .into_iter()
            .map(|n| n.item as usize)
            .collect();
        idx.sort_unstable();
        idx
    }
}
