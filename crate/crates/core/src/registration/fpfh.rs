use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{KdTree, Point3, PointCloud, Vector3};

const BINS_PER_FEATURE: usize = 11;
pub const FPFH_BINS: usize = 3 * BINS_PER_FEATURE;

/// 33-bin Fast Point Feature Histogram of one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FpfhFeature {
    pub histogram: [f64; FPFH_BINS],
    /// True when the point had no usable neighbours and the histogram is
    /// all zeros.
    pub empty: bool,
}

impl FpfhFeature {
    fn zero() -> Self {
        Self {
            histogram: [0.0; FPFH_BINS],
            empty: true,
        }
    }
}

/// Darboux-frame angles `(alpha, phi, theta)` for a point pair, with the
/// source chosen as the point whose normal makes the smaller angle with the
/// connecting line. `None` when the pair is degenerate.
fn pair_features(p1: &Point3, n1: &Vector3, p2: &Point3, n2: &Vector3) -> Option<(f64, f64, f64)> {
    let mut dp = p2 - p1;
    let dist = dp.norm();
    if dist == 0.0 {
        return None;
    }
    let a1 = n1.dot(&dp) / dist;
    let a2 = n2.dot(&dp) / dist;
    let (u, n_target, phi);
    if a1.abs().acos() > a2.abs().acos() {
        u = *n2;
        n_target = *n1;
        dp = -dp;
        phi = -a2;
    } else {
        u = *n1;
        n_target = *n2;
        phi = a1;
    }
    let v = dp.cross(&u);
    let vn = v.norm();
    if vn == 0.0 {
        return None;
    }
    let v = v / vn;
    let w = u.cross(&v);
    let alpha = v.dot(&n_target);
    let theta = w.dot(&n_target).atan2(u.dot(&n_target));
    Some((alpha, phi, theta))
}

fn bin(value: f64, lo: f64, hi: f64) -> usize {
    let b = ((value - lo) / (hi - lo) * BINS_PER_FEATURE as f64).floor();
    (b.max(0.0) as usize).min(BINS_PER_FEATURE - 1)
}

/// Simplified histogram of one point against its neighbours; each
/// sub-histogram sums to 100.
fn spfh(points: &[Point3], normals: &[Vector3], valid: &[bool], i: usize, nbrs: &[usize]) -> Option<[f64; FPFH_BINS]> {
    let mut h = [0.0; FPFH_BINS];
    let mut count = 0usize;
    let mut feats = Vec::with_capacity(nbrs.len());
    for &j in nbrs {
        if j == i || !valid[j] {
            continue;
        }
        if let Some(f) = pair_features(&points[i], &normals[i], &points[j], &normals[j]) {
            feats.push(f);
            count += 1;
        }
    }
    if count == 0 {
        return None;
    }
    let incr = 100.0 / count as f64;
    for (alpha, phi, theta) in feats {
        h[bin(theta, -PI, PI)] += incr;
        h[BINS_PER_FEATURE + bin(alpha, -1.0, 1.0)] += incr;
        h[2 * BINS_PER_FEATURE + bin(phi, -1.0, 1.0)] += incr;
    }
    Some(h)
}

/// FPFH descriptors for every point of a cloud with normals.
///
/// `valid` marks points whose normal is usable (see
/// [`crate::geometry::estimate_normals`]); invalid points and points without
/// neighbours within `radius` get an all-zero histogram flagged `empty`.
pub fn compute_fpfh(cloud: &PointCloud, valid: &[bool], radius: f64) -> Result<Vec<FpfhFeature>> {
    if !(radius > 0.0) {
        return Err(Error::Geometry("FPFH radius must be > 0".into()));
    }
    let normals = cloud
        .normals()
        .ok_or_else(|| Error::Geometry("FPFH requires normals".into()))?;
    if valid.len() != cloud.len() {
        return Err(Error::Shape("validity mask length differs from cloud".into()));
    }
    let points = cloud.points();
    let tree = KdTree::build(points);
    let neighborhoods: Vec<Vec<(usize, f64)>> = points
        .iter()
        .map(|p| {
            tree.radius(points, p, radius)
                .into_iter()
                .map(|n| (n.index, n.distance))
                .collect()
        })
        .collect();
    let spfhs: Vec<Option<[f64; FPFH_BINS]>> = (0..points.len())
        .map(|i| {
            if !valid[i] {
                return None;
            }
            let idx: Vec<usize> = neighborhoods[i].iter().map(|&(j, _)| j).collect();
            spfh(points, normals, valid, i, &idx)
        })
        .collect();

    let mut out = Vec::with_capacity(points.len());
    for i in 0..points.len() {
        let Some(own) = spfhs[i] else {
            out.push(FpfhFeature::zero());
            continue;
        };
        let mut h = own;
        let mut acc = [0.0; FPFH_BINS];
        let mut k = 0usize;
        for &(j, d) in &neighborhoods[i] {
            if j == i || d == 0.0 {
                continue;
            }
            if let Some(s) = &spfhs[j] {
                let w = 1.0 / d;
                for b in 0..FPFH_BINS {
                    acc[b] += w * s[b];
                }
                k += 1;
            }
        }
        if k > 0 {
            for b in 0..FPFH_BINS {
                h[b] += acc[b] / k as f64;
            }
        }
        // Normalise each of the three sub-histograms to 100.
        for f in 0..3 {
            let range = f * BINS_PER_FEATURE..(f + 1) * BINS_PER_FEATURE;
            let sum: f64 = h[range.clone()].iter().sum();
            if sum > 0.0 {
                for v in &mut h[range] {
                    *v *= 100.0 / sum;
                }
            }
        }
        out.push(FpfhFeature {
            histogram: h,
            empty: false,
        });
    }
    Ok(out)
}
