use super::{kabsch, RegistrationConfig};
use crate::error::{Error, Result};
use crate::geometry::{KdTree, Point3, PointCloud, RigidTransform};

#[derive(Debug, Clone)]
pub struct IcpResult {
    /// Residual transform to apply after `init`.
    pub transform: RigidTransform,
    /// RMS correspondence distance measured at the start of each iteration,
    /// followed by the final RMS.
    pub rms_history: Vec<f64>,
    pub iterations: usize,
}

impl IcpResult {
    pub fn final_rms(&self) -> f64 {
        *self.rms_history.last().unwrap_or(&f64::NAN)
    }
}

fn correspond(
    moved: &[Point3],
    dst: &[Point3],
    tree: &KdTree,
    max_d: f64,
) -> (Vec<Point3>, Vec<Point3>, f64) {
    let mut s = Vec::with_capacity(moved.len());
    let mut d = Vec::with_capacity(moved.len());
    let mut sq = 0.0;
    for p in moved {
        let nb = tree.nearest(dst, p);
        if nb.distance <= max_d {
            s.push(*p);
            d.push(nb.point);
            sq += nb.distance * nb.distance;
        }
    }
    let rms = if s.is_empty() { f64::NAN } else { (sq / s.len() as f64).sqrt() };
    (s, d, rms)
}

/// Point-to-point ICP of `src` (first moved by `init`) onto `dst`.
pub fn icp(src: &PointCloud, dst: &PointCloud, init: &RigidTransform, cfg: &RegistrationConfig) -> Result<IcpResult> {
    let fail = |reason: String| Error::Registration { stage: "icp", reason };
    let tree = KdTree::build(dst.points());
    let dp = dst.points();
    let start: Vec<Point3> = src.points().iter().map(|p| init.apply_point(p)).collect();
    let mut acc = RigidTransform::identity();
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut moved = start.clone();
    for _ in 0..cfg.icp_max_iterations {
        let (s, d, rms) = correspond(&moved, dp, &tree, cfg.icp_max_correspondence);
        if s.is_empty() {
            return Err(fail(format!(
                "no correspondences within {} mm",
                cfg.icp_max_correspondence
            )));
        }
        history.push(rms);
        if history.len() >= 2 {
            let prev = history[history.len() - 2];
            if (prev - rms).abs() < cfg.icp_tolerance {
                break;
            }
        }
        let step = kabsch(&s, &d)?;
        acc = step.compose(&acc);
        moved = start.iter().map(|p| acc.apply_point(p)).collect();
        iterations += 1;
    }
    if history.len() == iterations {
        // Loop exhausted without a convergence check on the final pose.
        let (s, _, rms) = correspond(&moved, dp, &tree, cfg.icp_max_correspondence);
        if s.is_empty() {
            return Err(fail("correspondences lost in final iteration".into()));
        }
        history.push(rms);
    }
    Ok(IcpResult {
        transform: acc,
        rms_history: history,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vector3;

    /// 2000 points on a closed, asymmetric bumpy ellipsoid.
    fn surface() -> PointCloud {
        let n = 2000;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let pts = (0..n)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = golden * i as f64;
                let (x, y) = (r * phi.cos(), r * phi.sin());
                let bump = 1.0 + 0.25 * (4.0 * x).sin() * (3.0 * y + 0.5).cos() + 0.15 * z * x;
                Point3::new(24.0 * x * bump, 18.0 * y * bump, 15.0 * z * bump)
            })
            .collect();
        PointCloud::new(pts).unwrap()
    }

    #[test]
    fn recovers_small_perturbation() {
        let dst = surface();
        let t = RigidTransform::from_axis_angle(&Vector3::new(0.3, 0.4, 1.0), 2f64.to_radians(), Vector3::new(3.0, 0.0, 0.0));
        let src = dst.apply_transform(&t);
        let r = icp(&src, &dst, &RigidTransform::identity(), &RegistrationConfig::default()).unwrap();
        assert!(r.final_rms() < 0.1, "rms {:?}", r.rms_history);
        for w in r.rms_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "rms increased: {:?}", r.rms_history);
        }
    }

    #[test]
    fn fixed_point_is_identity() {
        let c = surface();
        let r = icp(&c, &c, &RigidTransform::identity(), &RegistrationConfig::default()).unwrap();
        assert!((r.transform.matrix() - RigidTransform::identity().matrix()).abs().max() < 1e-9);
    }

    #[test]
    fn no_correspondences_is_error() {
        let c = surface();
        let far = c.apply_transform(&RigidTransform::from_translation(Vector3::new(1000.0, 0.0, 0.0)));
        assert!(matches!(
            icp(&far, &c, &RigidTransform::identity(), &RegistrationConfig::default()),
            Err(Error::Registration { stage: "icp", .. })
        ));
    }
}
