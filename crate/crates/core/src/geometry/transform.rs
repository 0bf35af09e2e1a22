use nalgebra::{Matrix3, Matrix4, Rotation3, Unit};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Point3, Vector3};
use crate::error::{Error, Result};

const SE3_TOL: f64 = 1e-9;

/// Element of SE(3) stored as a 4x4 homogeneous matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    matrix: Matrix4<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            matrix: Matrix4::identity(),
        }
    }

    /// Validates the SE(3) invariants on a raw homogeneous matrix.
    pub fn from_matrix(matrix: Matrix4<f64>) -> Result<Self> {
        let t = Self { matrix };
        t.check()?;
        Ok(t)
    }

    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3) -> Result<Self> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        Self::from_matrix(m)
    }

    pub fn from_translation(translation: Vector3) -> Self {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        Self { matrix: m }
    }

    /// Rotation of `angle` radians about `axis`, followed by `translation`.
    pub fn from_axis_angle(axis: &Vector3, angle: f64, translation: Vector3) -> Self {
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(rot.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        Self { matrix: m }
    }

    fn check(&self) -> Result<()> {
        let m = &self.matrix;
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("transform matrix".into()));
        }
        let r = self.rotation();
        let orth = (r.transpose() * r - Matrix3::identity()).abs().max();
        if orth > SE3_TOL {
            return Err(Error::Geometry(format!("rotation block not orthonormal (drift {orth:e})")));
        }
        if (r.determinant() - 1.0).abs() > SE3_TOL {
            return Err(Error::Geometry("rotation block has det != +1".into()));
        }
        let last = m.fixed_view::<1, 4>(3, 0);
        if last[0] != 0.0 || last[1] != 0.0 || last[2] != 0.0 || last[3] != 1.0 {
            return Err(Error::Geometry("last row must be (0,0,0,1)".into()));
        }
        Ok(())
    }

    pub(crate) fn from_matrix_unchecked(matrix: Matrix4<f64>) -> Self {
        Self { matrix }
    }

    pub(crate) fn reorthonormalize_if_needed(&mut self) {
        let r = self.rotation();
        let drift = (r.transpose() * r - Matrix3::identity()).abs().max();
        if drift > SE3_TOL || (r.determinant() - 1.0).abs() > SE3_TOL {
            self.reorthonormalize();
        }
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.matrix.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3 {
        self.matrix.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn apply_point(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation() * p.coords + self.translation())
    }

    pub fn apply_vector(&self, v: &Vector3) -> Vector3 {
        self.rotation() * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation().transpose();
        let t = -(rt * self.translation());
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        Self { matrix: m }
    }

    /// `self · other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        let mut out = Self {
            matrix: self.matrix * other.matrix,
        };
        out.matrix[(3, 0)] = 0.0;
        out.matrix[(3, 1)] = 0.0;
        out.matrix[(3, 2)] = 0.0;
        out.matrix[(3, 3)] = 1.0;
        out.reorthonormalize_if_needed();
        out
    }

    /// Replaces the rotation block by its polar factor (closest rotation in
    /// Frobenius norm).
    pub fn reorthonormalize(&mut self) {
        let r = nearest_rotation(&self.rotation());
        self.matrix.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    }

    /// Geodesic rotation angle in degrees.
    pub fn rotation_angle_deg(&self) -> f64 {
        let r = self.rotation();
        let c = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos().to_degrees()
    }

    /// Rotation angle (degrees) and translation distance (mm) between two
    /// transforms.
    pub fn difference(&self, other: &RigidTransform) -> (f64, f64) {
        let delta = self.inverse().compose(other);
        let rot = delta.rotation_angle_deg();
        let trans = (self.translation() - other.translation()).norm();
        (rot, trans)
    }

    pub fn to_rows(&self) -> [[f64; 4]; 4] {
        let mut rows = [[0.0; 4]; 4];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.matrix[(i, j)];
            }
        }
        rows
    }

    pub fn from_rows(rows: [[f64; 4]; 4]) -> Result<Self> {
        let mut m = Matrix4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                m[(i, j)] = rows[i][j];
            }
        }
        Self::from_matrix(m)
    }
}

/// Polar-decomposition projection onto SO(3).
pub(crate) fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * v_t
}

impl Serialize for RigidTransform {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = <[[f64; 4]; 4]>::deserialize(d)?;
        RigidTransform::from_rows(rows).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn rot(deg: f64, t: [f64; 3]) -> RigidTransform {
        RigidTransform::from_axis_angle(
            &Vector3::new(0.3, -0.5, 0.8),
            deg.to_radians(),
            Vector3::new(t[0], t[1], t[2]),
        )
    }

    #[test]
    fn quarter_turn_about_z() {
        let t = RigidTransform::from_axis_angle(&Vector3::z(), FRAC_PI_2, Vector3::zeros());
        let p = t.apply_point(&Point3::new(1.0, 0.0, 0.0));
        assert!((p - Point3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn identity_is_noop() {
        let p = Point3::new(1.5, -2.0, 7.0);
        assert_eq!(RigidTransform::identity().apply_point(&p), p);
    }

    #[test]
    fn compose_identity_and_inverse() {
        let t = rot(37.0, [1.0, 2.0, -3.0]);
        assert_eq!(RigidTransform::identity().compose(&t), t);
        let id = t.inverse().compose(&t);
        assert!((id.matrix() - Matrix4::identity()).abs().max() < 1e-9);
    }

    #[test]
    fn compose_translations() {
        let a = RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let b = RigidTransform::from_translation(Vector3::new(0.0, 2.0, 0.0));
        assert_eq!(a.compose(&b).translation(), Vector3::new(1.0, 2.0, 0.0));
    }

    #[test]
    fn drifted_product_is_reorthonormalized() {
        let mut m = *rot(10.0, [0.0; 3]).matrix();
        m[(0, 0)] += 1e-7;
        let drifted = RigidTransform { matrix: m };
        let out = drifted.compose(&RigidTransform::identity());
        assert!(out.check().is_ok());
    }

    #[test]
    fn rejects_reflection() {
        let r = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform::from_parts(r, Vector3::zeros()).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let t = rot(12.0, [4.0, 5.0, 6.0]);
        let s = serde_json::to_string(&t).unwrap();
        let back: RigidTransform = serde_json::from_str(&s).unwrap();
        assert!((back.matrix() - t.matrix()).abs().max() < 1e-15);
    }
}
