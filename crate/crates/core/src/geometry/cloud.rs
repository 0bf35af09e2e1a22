use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{KdTree, Neighbor, Point3, RigidTransform, Vector3};
use crate::error::{Error, Result};

/// An unordered set of surface points in millimetres, optionally with unit
/// normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    normals: Option<Vec<Vector3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Geometry("point cloud must contain at least one point".into()));
        }
        if let Some(i) = points.iter().position(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self {
            points,
            normals: None,
        })
    }

    pub fn with_normals(points: Vec<Point3>, normals: Vec<Vector3>) -> Result<Self> {
        if normals.len() != points.len() {
            return Err(Error::Shape(format!(
                "{} normals for {} points",
                normals.len(),
                points.len()
            )));
        }
        if let Some(i) = normals.iter().position(|n| (n.norm() - 1.0).abs() > 1e-6) {
            return Err(Error::Geometry(format!("normal {i} is not unit length")));
        }
        let mut cloud = Self::new(points)?;
        cloud.normals = Some(normals);
        Ok(cloud)
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vector3]> {
        self.normals.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    /// Returns `p' = R p + t` for every point; normals are rotated.
    pub fn apply_transform(&self, transform: &RigidTransform) -> PointCloud {
        let points = self.points.iter().map(|p| transform.apply_point(p)).collect();
        let normals = self
            .normals
            .as_ref()
            .map(|ns| ns.iter().map(|n| transform.apply_vector(n)).collect());
        PointCloud { points, normals }
    }

    pub fn centroid(&self) -> Point3 {
        let sum = self
            .points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Point3::from(sum / self.points.len() as f64)
    }

    pub fn bounding_box(&self) -> BoundingBox {
        let mut min = self.points[0];
        let mut max = self.points[0];
        for p in &self.points[1..] {
            for d in 0..3 {
                min[d] = min[d].min(p[d]);
                max[d] = max[d].max(p[d]);
            }
        }
        BoundingBox { min, max }
    }

    /// Builds a KD-tree over the points. Callers issuing many queries should
    /// keep the tree around.
    pub fn index(&self) -> KdTree {
        KdTree::build(&self.points)
    }

    pub fn knn(&self, query: &Point3, k: usize) -> Result<Vec<Neighbor>> {
        self.index().knn(&self.points, query, k)
    }

    pub fn radius_query(&self, query: &Point3, radius: f64) -> Vec<Neighbor> {
        self.index().radius(&self.points, query, radius)
    }

    /// Replaces the points in each occupied voxel of edge `size` by their
    /// centroid. Output order follows the voxel keys; normals are dropped.
    pub fn voxel_downsample(&self, size: f64) -> Result<PointCloud> {
        if !(size > 0.0) {
            return Err(Error::Geometry("voxel size must be > 0".into()));
        }
        let mut cells: BTreeMap<[i64; 3], (Vector3, usize)> = BTreeMap::new();
        for p in &self.points {
            let key = [
                (p.x / size).floor() as i64,
                (p.y / size).floor() as i64,
                (p.z / size).floor() as i64,
            ];
            let e = cells.entry(key).or_insert((Vector3::zeros(), 0));
            e.0 += p.coords;
            e.1 += 1;
        }
        PointCloud::new(
            cells
                .into_values()
                .map(|(sum, n)| Point3::from(sum / n as f64))
                .collect(),
        )
    }

    /// Mean distance from each point to its nearest other point.
    pub fn mean_spacing(&self) -> f64 {
        if self.points.len() < 2 {
            return 0.0;
        }
        let tree = self.index();
        let total: f64 = self
            .points
            .iter()
            .map(|p| {
                tree.knn(&self.points, p, 2)
                    .map(|nb| nb[1].distance)
                    .unwrap_or(0.0)
            })
            .sum();
        total / self.points.len() as f64
    }
}

/// Axis-aligned box in millimetres, closed on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: Point3,
    pub max: Point3,
}

impl BoundingBox {
    pub fn new(min: Point3, max: Point3) -> Result<Self> {
        if (0..3).any(|d| min[d] > max[d]) {
            return Err(Error::Geometry(format!(
                "bounding box min {min:?} exceeds max {max:?}"
            )));
        }
        Ok(Self { min, max })
    }

    /// The box grown by `margin` on every side.
    pub fn expanded(&self, margin: f64) -> BoundingBox {
        let m = Vector3::repeat(margin.max(0.0));
        BoundingBox {
            min: self.min - m,
            max: self.max + m,
        }
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|d| p[d] >= self.min[d] && p[d] <= self.max[d])
    }
}

/// Keeps exactly the points inside `bbox`, preserving order.
pub fn crop_roi(cloud: &PointCloud, bbox: &BoundingBox) -> Result<PointCloud> {
    let keep: Vec<usize> = (0..cloud.len())
        .filter(|&i| bbox.contains(&cloud.points[i]))
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyRoi);
    }
    let points = keep.iter().map(|&i| cloud.points[i]).collect();
    let normals = cloud
        .normals
        .as_ref()
        .map(|ns| keep.iter().map(|&i| ns[i]).collect());
    Ok(PointCloud { points, normals })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(pts.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect()).unwrap()
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(PointCloud::new(vec![]).is_err());
        assert!(PointCloud::new(vec![Point3::new(f64::NAN, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn crop_keeps_inside_points_in_order() {
        let c = cloud(&[[0.0, 0.0, 0.0], [10.0, 10.0, 10.0], [5.0, 5.0, 5.0]]);
        let b = BoundingBox::new(Point3::origin(), Point3::new(5.0, 5.0, 5.0)).unwrap();
        let out = crop_roi(&c, &b).unwrap();
        assert_eq!(out.points(), &[Point3::origin(), Point3::new(5.0, 5.0, 5.0)]);
    }

    #[test]
    fn crop_all_inside_is_identity() {
        let c = cloud(&[[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]]);
        let b = BoundingBox::new(Point3::origin(), Point3::new(5.0, 5.0, 5.0)).unwrap();
        assert_eq!(crop_roi(&c, &b).unwrap(), c);
    }

    #[test]
    fn crop_disjoint_box_is_empty_roi() {
        let c = cloud(&[[1.0, 1.0, 1.0]]);
        let b = BoundingBox::new(Point3::new(5.0, 5.0, 5.0), Point3::new(6.0, 6.0, 6.0)).unwrap();
        assert!(matches!(crop_roi(&c, &b), Err(Error::EmptyRoi)));
    }

    #[test]
    fn inverted_box_rejected() {
        assert!(BoundingBox::new(Point3::new(1.0, 0.0, 0.0), Point3::origin()).is_err());
    }

    #[test]
    fn translation_moves_points() {
        let c = cloud(&[[1.0, 2.0, 3.0]]);
        let t = RigidTransform::from_translation(Vector3::new(5.0, 0.0, 0.0));
        assert_eq!(c.apply_transform(&t).points()[0], Point3::new(6.0, 2.0, 3.0));
    }
}
