use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{kabsch, FpfhFeature, RegistrationConfig, FPFH_BINS};
use crate::error::{Error, Result};
use crate::geometry::{KdTree, Point3, PointCloud, RigidTransform};

#[derive(Debug, Clone)]
pub struct RansacResult {
    pub transform: RigidTransform,
    /// Correspondences within the inlier threshold under `transform`.
    pub inliers: usize,
    pub correspondences: usize,
    /// Fraction of source points with a destination point within the
    /// inlier threshold under `transform`.
    pub inlier_fraction: f64,
}

fn feature_dist2(a: &[f64; FPFH_BINS], b: &[f64; FPFH_BINS]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest feature in `pool` (lowest index on ties).
fn nearest_feature(query: &[f64; FPFH_BINS], pool: &[FpfhFeature]) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (j, f) in pool.iter().enumerate() {
        if f.empty {
            continue;
        }
        let d = feature_dist2(query, &f.histogram);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, j));
        }
    }
    best.map(|(_, j)| j)
}

/// Mutual nearest neighbours in descriptor space, as (src, dst) pairs.
pub(crate) fn mutual_matches(src: &[FpfhFeature], dst: &[FpfhFeature]) -> Vec<(usize, usize)> {
    let forward: Vec<Option<usize>> = src
        .iter()
        .map(|f| if f.empty { None } else { nearest_feature(&f.histogram, dst) })
        .collect();
    let mut backward: Vec<Option<Option<usize>>> = vec![None; dst.len()];
    let mut pairs = Vec::new();
    for (i, fwd) in forward.iter().enumerate() {
        let Some(j) = *fwd else { continue };
        let back = *backward[j].get_or_insert_with(|| nearest_feature(&dst[j].histogram, src));
        if back == Some(i) {
            pairs.push((i, j));
        }
    }
    pairs
}

fn count_inliers(t: &RigidTransform, src: &[Point3], dst: &[Point3], pairs: &[(usize, usize)], thr2: f64) -> usize {
    pairs
        .iter()
        .filter(|&&(i, j)| (t.apply_point(&src[i]) - dst[j]).norm_squared() <= thr2)
        .count()
}

/// Feature-matched RANSAC over 3-point samples. The best hypothesis (most
/// inliers; earliest on ties) is refined by a least-squares fit to its
/// inliers.
pub fn ransac_global(
    src: &PointCloud,
    dst: &PointCloud,
    src_feats: &[FpfhFeature],
    dst_feats: &[FpfhFeature],
    cfg: &RegistrationConfig,
) -> Result<RansacResult> {
    let fail = |reason: String| Error::Registration {
        stage: "ransac",
        reason,
    };
    if src.len() < 3 || dst.len() < 3 {
        return Err(fail("both clouds need at least 3 points".into()));
    }
    if src_feats.len() != src.len() || dst_feats.len() != dst.len() {
        return Err(fail("one feature per point required".into()));
    }
    let pairs = mutual_matches(src_feats, dst_feats);
    if pairs.len() < 3 {
        return Err(fail(format!("only {} mutual feature matches", pairs.len())));
    }
    let sp = src.points();
    let dp = dst.points();
    let thr2 = cfg.ransac_inlier_threshold * cfg.ransac_inlier_threshold;
    let ratio = cfg.ransac_edge_ratio;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, RigidTransform)> = None;
    for _ in 0..cfg.ransac_max_iterations {
        let a = rng.random_range(0..pairs.len());
        let b = rng.random_range(0..pairs.len());
        let c = rng.random_range(0..pairs.len());
        if a == b || b == c || a == c {
            continue;
        }
        let sample = [pairs[a], pairs[b], pairs[c]];
        // Edge-length consistency: a rigid map preserves all three edges.
        let mut consistent = true;
        for (x, y) in [(0, 1), (1, 2), (0, 2)] {
            let ls = (sp[sample[x].0] - sp[sample[y].0]).norm();
            let ld = (dp[sample[x].1] - dp[sample[y].1]).norm();
            if ls < ld * ratio || ld < ls * ratio || ls == 0.0 {
                consistent = false;
                break;
            }
        }
        if !consistent {
            continue;
        }
        let s: Vec<Point3> = sample.iter().map(|&(i, _)| sp[i]).collect();
        let d: Vec<Point3> = sample.iter().map(|&(_, j)| dp[j]).collect();
        let Ok(t) = kabsch(&s, &d) else { continue };
        let score = count_inliers(&t, sp, dp, &pairs, thr2);
        if best.as_ref().is_none_or(|(bs, _)| score > *bs) {
            best = Some((score, t));
        }
    }
    let Some((_, hypothesis)) = best else {
        return Err(fail("no consistent hypothesis".into()));
    };
    let inlier_pairs: Vec<(usize, usize)> = pairs
        .iter()
        .copied()
        .filter(|&(i, j)| (hypothesis.apply_point(&sp[i]) - dp[j]).norm_squared() <= thr2)
        .collect();
    let mut transform = hypothesis;
    if inlier_pairs.len() >= 3 {
        let s: Vec<Point3> = inlier_pairs.iter().map(|&(i, _)| sp[i]).collect();
        let d: Vec<Point3> = inlier_pairs.iter().map(|&(_, j)| dp[j]).collect();
        let refined = kabsch(&s, &d)?;
        if count_inliers(&refined, sp, dp, &pairs, thr2) >= inlier_pairs.len() {
            transform = refined;
        }
    }
    let inliers = count_inliers(&transform, sp, dp, &pairs, thr2);
    let tree = KdTree::build(dp);
    let covered = sp
        .iter()
        .filter(|p| tree.nearest(dp, &transform.apply_point(p)).distance <= cfg.ransac_inlier_threshold)
        .count();
    let fraction = covered as f64 / sp.len() as f64;
    if fraction < cfg.ransac_min_inlier_fraction {
        return Err(fail(format!(
            "best hypothesis has inlier fraction {fraction:.3} < {}",
            cfg.ransac_min_inlier_fraction
        )));
    }
    Ok(RansacResult {
        transform,
        inliers,
        correspondences: pairs.len(),
        inlier_fraction: fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{estimate_normals, Orientation, Vector3};
    use crate::registration::compute_fpfh;
    use rand_distr::{Distribution, Uniform};

    fn surface(n_side: usize) -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..n_side {
            for j in 0..n_side {
                let x = i as f64 * 2.0 - n_side as f64;
                let y = j as f64 * 2.0 - n_side as f64;
                let z = 8.0 * (-(x * x + y * y) / 300.0).exp() + 3.0 * (x / 7.0).sin() + 2.0 * (y / 9.0).cos() * (x / 13.0).cos();
                pts.push(Point3::new(x, y, z));
            }
        }
        PointCloud::new(pts).unwrap()
    }

    fn features(c: &PointCloud) -> Vec<FpfhFeature> {
        let est = estimate_normals(c, 12, Orientation::AwayFromCentroid).unwrap();
        compute_fpfh(&est.cloud, &est.valid, 8.0).unwrap()
    }

    fn cfg() -> RegistrationConfig {
        RegistrationConfig {
            ransac_max_iterations: 20_000,
            ransac_inlier_threshold: 2.0,
            ..Default::default()
        }
    }

    #[test]
    fn self_alignment_has_full_inliers() {
        let c = surface(30);
        let f = features(&c);
        let r = ransac_global(&c, &c, &f, &f, &cfg()).unwrap();
        assert!(r.inlier_fraction > 0.99);
        assert!(r.transform.rotation_angle_deg() < 1e-6);
    }

    #[test]
    fn recovers_known_motion() {
        let dst = surface(30);
        let t = RigidTransform::from_axis_angle(&Vector3::new(0.1, 0.3, 1.0), 25f64.to_radians(), Vector3::new(10.0, -4.0, 3.0));
        let src = dst.apply_transform(&t.inverse());
        // Normals oriented away from each cloud's own centroid travel with it.
        let r = ransac_global(&src, &dst, &features(&src), &features(&dst), &cfg()).unwrap();
        let (rot, trans) = r.transform.difference(&t);
        assert!(rot < 1.0 && trans < 1.0, "rot {rot} trans {trans}");
    }

    #[test]
    fn unrelated_cloud_fails() {
        let dst = surface(30);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = Uniform::new(-200.0, 200.0).unwrap();
        let src = PointCloud::new((0..900).map(|_| Point3::new(u.sample(&mut rng), u.sample(&mut rng), u.sample(&mut rng))).collect()).unwrap();
        let est = estimate_normals(&src, 12, Orientation::AwayFromCentroid).unwrap();
        let fs = compute_fpfh(&est.cloud, &est.valid, 40.0).unwrap();
        let err = ransac_global(&src, &dst, &fs, &features(&dst), &cfg()).unwrap_err();
        assert!(matches!(err, Error::Registration { stage: "ransac", .. }));
    }
}
