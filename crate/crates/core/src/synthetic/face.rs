use nalgebra::Vector3 as V3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::atlas::LandmarkSet;
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Mesh, Point3, RigidTransform, Vector3};
use crate::rng::stream;
use crate::schema::{facial_names, EAR_LANDMARKS};

/// Number of global shape coefficients.
pub const SHAPE_COEFFICIENTS: usize = 8;

/// Peak heights (mm) of the analytic facial features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureAmplitudes {
    pub nose: f64,
    pub brow: f64,
    pub chin: f64,
    pub cheeks: f64,
    pub lips: f64,
    pub ears: f64,
    pub eye_sockets: f64,
}

impl Default for FeatureAmplitudes {
    fn default() -> Self {
        Self {
            nose: 18.0,
            brow: 5.0,
            chin: 8.0,
            cheeks: 5.0,
            lips: 5.0,
            ears: 14.0,
            eye_sockets: 7.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaceGenParams {
    /// Half-axes (x width, y height, z depth) of the base ellipsoid, mm.
    pub radii: [f64; 3],
    /// Half-range of the azimuth parameter, degrees.
    pub azimuth_range: f64,
    /// Half-range of the elevation parameter, degrees.
    pub elevation_range: f64,
    pub amplitudes: FeatureAmplitudes,
    /// Standard deviation of the shape coefficients (0 disables shape variation).
    pub shape_std: f64,
    pub max_rotation_deg: f64,
    pub max_translation_mm: f64,
    /// Gaussian vertex noise along the surface direction, mm.
    pub noise: f64,
    /// Grid cells along azimuth and elevation.
    pub resolution: [usize; 2],
    /// Remove vertices near the ear landmarks.
    pub corrupt_ears: bool,
    pub ear_corruption_radius: f64,
    /// Points sampled for the canonical reference cloud.
    pub reference_points: usize,
    pub seed: u64,
}

impl Default for FaceGenParams {
    fn default() -> Self {
        Self {
            radii: [75.0, 100.0, 90.0],
            azimuth_range: 115.0,
            elevation_range: 70.0,
            amplitudes: FeatureAmplitudes::default(),
            shape_std: 1.0,
            max_rotation_deg: 20.0,
            max_translation_mm: 30.0,
            noise: 0.0,
            resolution: [200, 150],
            corrupt_ears: false,
            ear_corruption_radius: 10.0,
            reference_points: 10_000,
            seed: 0,
        }
    }
}

impl FaceGenParams {
    pub fn validate(&self) -> Result<()> {
        if self.radii.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::config("generate.radii", "all radii must be positive"));
        }
        if !(self.azimuth_range > 0.0 && self.azimuth_range < 180.0) || !(self.elevation_range > 0.0 && self.elevation_range < 90.0) {
            return Err(Error::config("generate.azimuth_range", "ranges must lie in (0, 180) and (0, 90) degrees"));
        }
        if self.noise < 0.0 || self.shape_std < 0.0 {
            return Err(Error::config("generate.noise", "noise and shape_std must be >= 0"));
        }
        if self.max_rotation_deg < 0.0 || self.max_translation_mm < 0.0 {
            return Err(Error::config("generate.max_rotation_deg", "pose ranges must be >= 0"));
        }
        if self.resolution.iter().any(|&r| r < 4) {
            return Err(Error::config("generate.resolution", "need at least 4 cells per axis"));
        }
        if self.reference_points == 0 {
            return Err(Error::config("generate.reference_points", "must be >= 1"));
        }
        Ok(())
    }

    /// Region used to crop clouds before fine alignment: the central face,
    /// excluding ears and the far sides of the head.
    pub fn roi(&self) -> BoundingBox {
        let [a, b, c] = self.radii;
        BoundingBox::new(
            Point3::new(-0.93 * a, -1.05 * b, -0.6 * c),
            Point3::new(0.93 * a, 1.05 * b, 0.5 * c),
        )
        .expect("ordered corners")
    }
}

/// Gaussian bump in parameter space (degrees).
#[derive(Debug, Clone, Copy)]
struct Bump {
    az: f64,
    el: f64,
    s_az: f64,
    s_el: f64,
    amp: f64,
}

impl Bump {
    fn at(&self, az: f64, el: f64) -> f64 {
        let u = (az - self.az) / self.s_az;
        let v = (el - self.el) / self.s_el;
        self.amp * (-0.5 * (u * u + v * v)).exp()
    }
}

/// A face shape: the surface function plus its landmark parameters.
#[derive(Debug, Clone)]
pub struct FaceShape {
    radii: [f64; 3],
    bumps: Vec<Bump>,
    /// `(name, azimuth, elevation)` in schema order.
    landmarks: Vec<(String, f64, f64)>,
}

impl FaceShape {
    /// Builds the shape for coefficient vector `c`.
    pub fn new(params: &FaceGenParams, c: &[f64; SHAPE_COEFFICIENTS]) -> Self {
        let a = &params.amplitudes;
        // Feature anchors moved by the coefficients.
        let nose_amp = a.nose * (1.0 + 0.06 * c[0]);
        let nose_el = -6.0 + 0.5 * c[1];
        let eye_az = 21.0 + 4.0 * c[2];
        let mouth_el = -23.0 + 1.2 * c[3];
        let chin_el = -46.0 + 1.5 * c[4];
        let chin_amp = a.chin * (1.0 + 0.08 * c[4]);
        let brow_amp = a.brow * (1.0 + 0.1 * c[5]);
        let ear_az = 97.0 + 2.0 * c[5];
        let ear_el = 2.0 + 6.0 * c[5];
        let cheek_az = 36.0 + 5.0 * c[6];
        let cheek_amp = a.cheeks * (1.0 + 0.1 * c[6]);
        let mouth_az = 15.0 + 3.0 * c[7];
        let lip_amp = a.lips * (1.0 + 0.1 * c[7]);

        let b = |az, el, s_az, s_el, amp| Bump { az, el, s_az, s_el, amp };
        let mut bumps = vec![
            b(0.0, nose_el, 6.0, 7.0, nose_amp),
            b(0.0, nose_el + 14.0, 4.0, 9.0, 0.5 * nose_amp),
            b(0.0, 26.0, 6.0, 4.0, 0.8 * brow_amp),
            b(0.0, mouth_el + 4.0, 0.6 * mouth_az, 3.0, lip_amp),
            b(0.0, mouth_el - 4.0, 0.55 * mouth_az, 3.0, lip_amp),
            b(0.0, chin_el, 10.0, 6.0, chin_amp),
        ];
        for side in [-1.0, 1.0] {
            bumps.extend([
                b(side * 9.0, nose_el - 3.0, 4.0, 4.0, 0.3 * nose_amp),
                b(side * 22.0, 25.0, 12.0, 4.0, brow_amp),
                b(side * eye_az, 11.0, 8.0, 5.0, -a.eye_sockets),
                b(side * cheek_az, -6.0, 10.0, 9.0, cheek_amp),
                b(side * 60.0, 0.0, 8.0, 10.0, 4.0),
                b(side * 70.0, -40.0, 8.0, 8.0, 4.0),
                b(side * ear_az, ear_el, 4.5, 10.0, a.ears),
            ]);
        }

        let midline = [
            ("Tr", 0.0, 55.0),
            ("G", 0.0, 26.0),
            ("N", 0.0, nose_el + 22.0),
            ("Prn", 0.0, nose_el),
            ("C", 0.0, nose_el - 5.0),
            ("Sn", 0.0, nose_el - 10.0),
            ("Ls", 0.0, mouth_el + 4.0),
            ("Sto", 0.0, mouth_el),
            ("Li", 0.0, mouth_el - 4.0),
            ("Sl", 0.0, 0.5 * (mouth_el - 4.0 + chin_el)),
            ("Pg", 0.0, chin_el),
            ("Gn", 0.0, chin_el - 8.0),
        ];
        // Left-side parameters; the right side mirrors the azimuth.
        let bilateral = [
            ("T", ear_az - 9.0, ear_el - 6.0),
            ("Pra", ear_az - 7.0, ear_el + 3.0),
            ("Sa", ear_az, ear_el + 14.0),
            ("Pa", ear_az + 7.0, ear_el),
            ("Sba", ear_az - 1.0, ear_el - 15.0),
            ("Ft", 40.0, 35.0),
            ("Zy", 60.0, 0.0),
            ("Go", 70.0, -40.0),
            ("Os", eye_az, 22.0),
            ("Ex", eye_az + 11.0, 11.0),
            ("Or", eye_az, 3.0),
            ("En", eye_az - 11.0, 11.0),
            ("Chk", cheek_az, -6.0),
            ("Ac", 11.0, nose_el - 4.0),
            ("Al", 9.0, nose_el - 1.0),
            ("Itn", 5.0, nose_el - 9.0),
            ("Stn", 4.0, nose_el - 5.0),
            ("Cph", 4.0, mouth_el + 6.0),
            ("Ch", mouth_az, mouth_el),
        ];
        let mut landmarks: Vec<(String, f64, f64)> = midline.iter().map(|&(n, az, el)| (n.to_string(), az, el)).collect();
        for (suffix, sign) in [("_R", -1.0), ("_L", 1.0)] {
            landmarks.extend(bilateral.iter().map(|&(n, az, el)| (format!("{n}{suffix}"), sign * az, el)));
        }
        debug_assert_eq!(
            landmarks.iter().map(|l| l.0.clone()).collect::<Vec<_>>(),
            facial_names()
        );
        Self {
            radii: params.radii,
            bumps,
            landmarks,
        }
    }

    /// Outward direction and base point (relative to the ellipsoid center).
    fn base(&self, az: f64, el: f64) -> (Vector3, Vector3) {
        let (az, el) = (az.to_radians(), el.to_radians());
        let [a, b, c] = self.radii;
        let p = V3::new(a * az.sin() * el.cos(), b * el.sin(), c * az.cos() * el.cos());
        let dir = p.normalize();
        (p, dir)
    }

    /// Surface point for parameters in degrees. The frame puts the undeformed
    /// front of the face at the origin, `+z` facing forward, `+y` up and the
    /// subject's left at `+x`.
    pub fn point(&self, az: f64, el: f64) -> Point3 {
        self.displaced(az, el, 0.0)
    }

    fn displaced(&self, az: f64, el: f64, extra: f64) -> Point3 {
        let (p, dir) = self.base(az, el);
        let d: f64 = self.bumps.iter().map(|b| b.at(az, el)).sum::<f64>() + extra;
        Point3::from(p + dir * d - V3::new(0.0, 0.0, self.radii[2]))
    }

    pub fn landmarks(&self) -> LandmarkSet {
        let (names, coords) = self
            .landmarks
            .iter()
            .map(|(n, az, el)| (n.clone(), self.point(*az, *el)))
            .unzip();
        LandmarkSet::new(names, coords).expect("schema names are unique")
    }

    /// Triangulated grid over the parameter rectangle. `noise` returns an
    /// extra displacement per vertex.
    pub fn mesh(&self, params: &FaceGenParams, mut noise: impl FnMut() -> f64) -> Result<Mesh> {
        let [na, ne] = params.resolution;
        let mut vertices = Vec::with_capacity((na + 1) * (ne + 1));
        for j in 0..=ne {
            let el = -params.elevation_range + 2.0 * params.elevation_range * j as f64 / ne as f64;
            for i in 0..=na {
                let az = -params.azimuth_range + 2.0 * params.azimuth_range * i as f64 / na as f64;
                vertices.push(self.displaced(az, el, noise()));
            }
        }
        let idx = |i: usize, j: usize| j * (na + 1) + i;
        let mut faces = Vec::with_capacity(2 * na * ne);
        for j in 0..ne {
            for i in 0..na {
                // Counter-clockwise seen from outside.
                faces.push([idx(i, j), idx(i, j + 1), idx(i + 1, j)]);
                faces.push([idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1)]);
            }
        }
        Mesh::new(vertices, faces)
    }
}

/// One generated subject, already posed.
#[derive(Debug, Clone)]
pub struct SyntheticSubject {
    pub mesh: Mesh,
    pub landmarks: LandmarkSet,
    /// Transform applied to the canonical face.
    pub pose: RigidTransform,
    pub coefficients: [f64; SHAPE_COEFFICIENTS],
}

fn random_pose(params: &FaceGenParams, rng: &mut impl Rng) -> RigidTransform {
    let axis = loop {
        let v = V3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            break v / n;
        }
    };
    let angle = rng.random_range(0.0..=params.max_rotation_deg).to_radians();
    let t = loop {
        let v = V3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() <= 1.0 {
            break v * params.max_translation_mm;
        }
    };
    RigidTransform::from_axis_angle(&axis, angle, t)
}

/// Canonical face: zero coefficients, no noise, identity pose.
pub fn canonical_face(params: &FaceGenParams) -> Result<(Mesh, LandmarkSet)> {
    params.validate()?;
    let shape = FaceShape::new(params, &[0.0; SHAPE_COEFFICIENTS]);
    Ok((shape.mesh(params, || 0.0)?, shape.landmarks()))
}

/// Generates subject `index` deterministically from `(params.seed, index)`.
pub fn generate_subject(params: &FaceGenParams, index: usize) -> Result<SyntheticSubject> {
    params.validate()?;
    let mut rng = stream(params.seed, &[0x5eed, index as u64]);
    let mut coefficients = [0.0; SHAPE_COEFFICIENTS];
    for c in &mut coefficients {
        let z: f64 = StandardNormal.sample(&mut rng);
        *c = params.shape_std * z.clamp(-2.5, 2.5);
    }
    let pose = random_pose(params, &mut rng);
    let shape = FaceShape::new(params, &coefficients);
    let landmarks = shape.landmarks();
    let sigma = params.noise;
    let mut mesh = shape.mesh(params, || {
        if sigma > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        } else {
            0.0
        }
    })?;
    if params.corrupt_ears {
        let ears: Vec<Point3> = EAR_LANDMARKS.iter().map(|n| landmarks.get(n)).collect::<Result<_>>()?;
        let r = params.ear_corruption_radius;
        mesh = mesh.retain_vertices(|_, p| ears.iter().all(|e| (p - e).norm() > r))?;
    }
    Ok(SyntheticSubject {
        mesh: mesh.apply_transform(&pose),
        landmarks: landmarks.apply_transform(&pose),
        pose,
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> FaceGenParams {
        FaceGenParams {
            resolution: [60, 40],
            ..FaceGenParams::default()
        }
    }

    #[test]
    fn canonical_landmarks_are_analytic() {
        let p = small();
        let (mesh, lm) = canonical_face(&p).unwrap();
        assert_eq!(lm.names(), facial_names().as_slice());
        let shape = FaceShape::new(&p, &[0.0; SHAPE_COEFFICIENTS]);
        assert_eq!(lm.get("Prn").unwrap(), shape.point(0.0, -6.0));
        // Nose tip sticks out of the undeformed front.
        assert!(lm.get("Prn").unwrap().z > 15.0);
        // Left side has positive x.
        assert!(lm.get("Ex_L").unwrap().x > 0.0 && lm.get("Ex_R").unwrap().x < 0.0);
        assert_eq!(mesh.vertex_count(), 61 * 41);
    }

    #[test]
    fn landmarks_near_surface() {
        let p = FaceGenParams::default();
        let s = generate_subject(&p, 3).unwrap();
        let cloud = s.mesh.to_cloud().unwrap();
        let tree = cloud.index();
        // Edge length of the default grid is about 1.6 mm.
        for q in s.landmarks.coords() {
            assert!(tree.nearest(cloud.points(), q).distance < 2.0);
        }
    }

    #[test]
    fn deterministic_and_varied() {
        let p = small();
        let a = generate_subject(&p, 1).unwrap();
        let b = generate_subject(&p, 1).unwrap();
        assert_eq!(a.mesh, b.mesh);
        assert_eq!(a.landmarks, b.landmarks);
        let c = generate_subject(&p, 2).unwrap();
        assert_ne!(a.coefficients, c.coefficients);
        assert!(a.pose.rotation_angle_deg() <= 20.0 + 1e-9);
        assert!(a.pose.translation().norm() <= 30.0 + 1e-9);
    }

    #[test]
    fn identity_null_case() {
        let p = FaceGenParams {
            shape_std: 0.0,
            max_rotation_deg: 0.0,
            max_translation_mm: 0.0,
            ..small()
        };
        let s = generate_subject(&p, 5).unwrap();
        let (mesh, lm) = canonical_face(&p).unwrap();
        assert_eq!(s.landmarks, lm);
        assert_eq!(s.mesh, mesh);
    }

    #[test]
    fn ear_corruption_removes_vertices() {
        let p = FaceGenParams {
            corrupt_ears: true,
            ..small()
        };
        let s = generate_subject(&p, 0).unwrap();
        let clean = generate_subject(&FaceGenParams { corrupt_ears: false, ..small() }, 0).unwrap();
        assert!(s.mesh.vertex_count() < clean.mesh.vertex_count());
        let cloud = s.mesh.to_cloud().unwrap();
        let tree = cloud.index();
        let sa = s.landmarks.get("Sa_L").unwrap();
        assert!(tree.nearest(cloud.points(), &sa).distance > p.ear_corruption_radius - 1e-9);
    }

    #[test]
    fn rejects_zero_radius() {
        let p = FaceGenParams {
            radii: [75.0, 0.0, 90.0],
            ..FaceGenParams::default()
        };
        assert!(generate_subject(&p, 0).is_err());
    }
}
