use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{KdTree, Point3, PointCloud, Vector3};
use crate::error::{Error, Result};

/// Rule used to pick the sign of an estimated normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Normals satisfy `n · d >= 0` for a fixed direction `d`.
    Direction([f64; 3]),
    /// Normals point towards a viewpoint: `n · (v - p) >= 0`.
    Viewpoint([f64; 3]),
    /// Normals point away from the cloud centroid.
    AwayFromCentroid,
}

impl Default for Orientation {
    fn default() -> Self {
        Orientation::Direction([0.0, 0.0, 1.0])
    }
}

#[derive(Debug, Clone)]
pub struct NormalEstimate {
    pub cloud: PointCloud,
    /// False where the neighbourhood covariance has rank < 2; the stored
    /// normal is then a placeholder.
    pub valid: Vec<bool>,
}

/// PCA normals from each point's `k`-neighbourhood.
pub fn estimate_normals(cloud: &PointCloud, k: usize, orientation: Orientation) -> Result<NormalEstimate> {
    if k < 3 {
        return Err(Error::Geometry("normal estimation needs k >= 3".into()));
    }
    let points = cloud.points();
    if k > points.len() {
        return Err(Error::TooFewPoints {
            requested: k,
            available: points.len(),
        });
    }
    let tree = KdTree::build(points);
    let centroid = cloud.centroid();
    let mut normals = Vec::with_capacity(points.len());
    let mut valid = Vec::with_capacity(points.len());
    for p in points {
        let nbrs = tree.knn(points, p, k)?;
        let mean = nbrs.iter().fold(Vector3::zeros(), |a, n| a + n.point.coords) / k as f64;
        let mut cov = Matrix3::zeros();
        for n in &nbrs {
            let d = n.point.coords - mean;
            cov += d * d.transpose();
        }
        cov /= k as f64;
        let eig = SymmetricEigen::new(cov);
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let largest = eig.eigenvalues[idx[2]];
        let middle = eig.eigenvalues[idx[1]];
        let ok = largest > 0.0 && middle > 1e-10 * largest;
        let mut n: Vector3 = eig.eigenvectors.column(idx[0]).into_owned();
        if !ok || !(n.norm() > 0.0) {
            valid.push(false);
            normals.push(Vector3::z());
            continue;
        }
        n.normalize_mut();
        let reference = match orientation {
            Orientation::Direction(d) => Vector3::new(d[0], d[1], d[2]),
            Orientation::Viewpoint(v) => Point3::new(v[0], v[1], v[2]) - p,
            Orientation::AwayFromCentroid => p - centroid,
        };
        if n.dot(&reference) < 0.0 {
            n = -n;
        }
        normals.push(n);
        valid.push(true);
    }
    Ok(NormalEstimate {
        cloud: PointCloud::with_normals(points.to_vec(), normals)?,
        valid,
    })
}
