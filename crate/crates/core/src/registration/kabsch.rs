use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform, Vector3};

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]` (SVD /
/// Kabsch, reflection-corrected).
pub fn kabsch(src: &[Point3], dst: &[Point3]) -> Result<RigidTransform> {
    if src.len() != dst.len() || src.is_empty() {
        return Err(Error::Shape(format!(
            "kabsch needs equal, non-empty sets (got {} and {})",
            src.len(),
            dst.len()
        )));
    }
    let n = src.len() as f64;
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s.coords - cs) * (d.coords - cd).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Geometry("svd failed".into()))?;
    let v = svd
        .v_t
        .ok_or_else(|| Error::Geometry("svd failed".into()))?
        .transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = v * d * u.transpose();
    let t = cd - r * cs;
    let mut m = *RigidTransform::from_translation(t).matrix();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("kabsch solution".into()));
    }
    // Rounding can push the SVD product a hair outside the SE(3) envelope.
    let mut out = RigidTransform::from_matrix_unchecked(m);
    out.reorthonormalize_if_needed();
    Ok(out)
}
