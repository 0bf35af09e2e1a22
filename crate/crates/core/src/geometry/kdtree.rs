use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::Point3;
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 12;

/// Result of a spatial query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub point: Point3,
    pub distance: f64,
}

/// Balanced, implicit KD-tree over a borrowed point slice.
///
/// The tree stores only a permutation of point indices; every query takes the
/// same slice the tree was built from. Each subtree occupies a contiguous
/// range of `order`, with its splitting element at the range midpoint.
#[derive(Debug, Clone)]
pub struct KdTree {
    order: Vec<usize>,
    axes: Vec<u8>,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dist2(a: &Point3, b: &Point3) -> f64 {
    let d = a - b;
    d.dot(&d)
}

impl KdTree {
    pub fn build(points: &[Point3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut axes = vec![0u8; points.len()];
        build_range(points, &mut order, &mut axes);
        Self { order, axes }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// The `k` nearest points, ascending by distance; equal distances are
    /// ordered by ascending index.
    pub fn knn(&self, points: &[Point3], query: &Point3, k: usize) -> Result<Vec<Neighbor>> {
        if k > self.order.len() {
            return Err(Error::TooFewPoints {
                requested: k,
                available: self.order.len(),
            });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_range(points, query, k, 0, self.order.len(), &mut heap);
        let mut found = heap.into_vec();
        found.sort();
        Ok(found
            .into_iter()
            .map(|c| Neighbor {
                index: c.index,
                point: points[c.index],
                distance: c.dist2.sqrt(),
            })
            .collect())
    }

    /// Index of the nearest point (lowest index on ties).
    pub fn nearest(&self, points: &[Point3], query: &Point3) -> Neighbor {
        self.knn(points, query, 1).expect("non-empty tree")[0]
    }

    fn knn_range(
        &self,
        points: &[Point3],
        query: &Point3,
        k: usize,
        lo: usize,
        hi: usize,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        if hi - lo <= LEAF_SIZE {
            for &idx in &self.order[lo..hi] {
                offer(heap, k, Candidate {
                    dist2: dist2(&points[idx], query),
                    index: idx,
                });
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let axis = self.axes[mid] as usize;
        offer(heap, k, Candidate {
            dist2: dist2(&points[idx], query),
            index: idx,
        });
        let diff = query[axis] - points[idx][axis];
        let (near, far) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.knn_range(points, query, k, near.0, near.1, heap);
        // Equal-distance candidates on the far side may still win on index.
        if heap.len() < k || diff * diff <= heap.peek().map_or(f64::INFINITY, |c| c.dist2) {
            self.knn_range(points, query, k, far.0, far.1, heap);
        }
    }

    /// All points within `radius` (inclusive), ascending by distance then index.
    pub fn radius(&self, points: &[Point3], query: &Point3, radius: f64) -> Vec<Neighbor> {
        let r2 = radius * radius;
        let mut hits = Vec::new();
        self.radius_range(points, query, r2, 0, self.order.len(), &mut hits);
        hits.sort();
        hits.into_iter()
            .map(|c| Neighbor {
                index: c.index,
                point: points[c.index],
                distance: c.dist2.sqrt(),
            })
            .collect()
    }

    fn radius_range(
        &self,
        points: &[Point3],
        query: &Point3,
        r2: f64,
        lo: usize,
        hi: usize,
        hits: &mut Vec<Candidate>,
    ) {
        if hi - lo <= LEAF_SIZE {
            for &idx in &self.order[lo..hi] {
                let d2 = dist2(&points[idx], query);
                if d2 <= r2 {
                    hits.push(Candidate { dist2: d2, index: idx });
                }
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let axis = self.axes[mid] as usize;
        let d2 = dist2(&points[idx], query);
        if d2 <= r2 {
            hits.push(Candidate { dist2: d2, index: idx });
        }
        let diff = query[axis] - points[idx][axis];
        if diff <= 0.0 || diff * diff <= r2 {
            self.radius_range(points, query, r2, lo, mid, hits);
        }
        if diff >= 0.0 || diff * diff <= r2 {
            self.radius_range(points, query, r2, mid + 1, hi, hits);
        }
    }
}

fn offer(heap: &mut BinaryHeap<Candidate>, k: usize, c: Candidate) {
    if heap.len() < k {
        heap.push(c);
    } else if let Some(worst) = heap.peek() {
        if c < *worst {
            heap.pop();
            heap.push(c);
        }
    }
}

fn build_range(points: &[Point3], order: &mut [usize], axes: &mut [u8]) {
    let n = order.len();
    if n <= LEAF_SIZE {
        return;
    }
    // Split on the axis of largest extent.
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        for d in 0..3 {
            lo[d] = lo[d].min(points[i][d]);
            hi[d] = hi[d].max(points[i][d]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    let mid = n / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    axes[mid] = axis as u8;
    let (left, right) = order.split_at_mut(mid);
    let (left_axes, right_axes) = axes.split_at_mut(mid);
    build_range(points, left, left_axes);
    build_range(points, &mut right[1..], &mut right_axes[1..]);
}
