use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Point3, PointCloud, RigidTransform};
use crate::error::{Error, Result};

/// Triangle mesh in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point3>,
    faces: Vec<[usize; 3]>,
    areas: Vec<f64>,
}

fn triangle_area(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

impl Mesh {
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(i) = vertices
            .iter()
            .position(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(Error::NonFinite(format!("vertex {i}")));
        }
        let n = vertices.len();
        for (f, face) in faces.iter().enumerate() {
            if let Some(&bad) = face.iter().find(|&&i| i >= n) {
                return Err(Error::FaceIndex {
                    face: f,
                    index: bad,
                    count: n,
                });
            }
        }
        let areas = faces
            .iter()
            .map(|f| triangle_area(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]))
            .collect();
        Ok(Self {
            vertices,
            faces,
            areas,
        })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn face_areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// The vertex set as a point cloud.
    pub fn to_cloud(&self) -> Result<PointCloud> {
        PointCloud::new(self.vertices.clone())
    }

    pub fn apply_transform(&self, transform: &RigidTransform) -> Mesh {
        Mesh {
            vertices: self
                .vertices
                .iter()
                .map(|p| transform.apply_point(p))
                .collect(),
            faces: self.faces.clone(),
            areas: self.areas.clone(),
        }
    }

    /// Drops vertices for which `keep` is false, along with every face that
    /// touches them, and re-indexes the rest.
    pub fn retain_vertices(&self, keep: impl Fn(usize, &Point3) -> bool) -> Result<Mesh> {
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        for (i, p) in self.vertices.iter().enumerate() {
            if keep(i, p) {
                remap[i] = vertices.len();
                vertices.push(*p);
            }
        }
        let faces = self
            .faces
            .iter()
            .filter(|f| f.iter().all(|&i| remap[i] != usize::MAX))
            .map(|f| [remap[f[0]], remap[f[1]], remap[f[2]]])
            .collect();
        Mesh::new(vertices, faces)
    }
}

/// Location of a sampled point: the face it came from and its barycentric
/// weights for the face's three vertices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub face: usize,
    pub barycentric: [f64; 3],
}

/// Area-weighted uniform sampling of `n` points on the mesh surface.
pub fn sample_surface(mesh: &Mesh, n: usize, seed: u64) -> Result<PointCloud> {
    sample_surface_detailed(mesh, n, seed).map(|(cloud, _)| cloud)
}

/// Like [`sample_surface`] but also reports where each sample was drawn.
pub fn sample_surface_detailed(
    mesh: &Mesh,
    n: usize,
    seed: u64,
) -> Result<(PointCloud, Vec<SurfaceSample>)> {
    if n == 0 {
        return Err(Error::Geometry("sample count must be at least 1".into()));
    }
    let total = mesh.total_area();
    if !(total > 0.0) {
        return Err(Error::ZeroArea);
    }
    let mut cumulative = Vec::with_capacity(mesh.areas.len());
    let mut acc = 0.0;
    for a in &mesh.areas {
        acc += a;
        cumulative.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.random::<f64>() * acc;
        let mut face = cumulative.partition_point(|&c| c <= target);
        face = face.min(cumulative.len() - 1);
        // Skip zero-area faces that share the cumulative value.
        while mesh.areas[face] == 0.0 && face + 1 < mesh.areas.len() {
            face += 1;
        }
        let r1: f64 = rng.random::<f64>().sqrt();
        let r2: f64 = rng.random();
        let bary = [1.0 - r1, r1 * (1.0 - r2), r1 * r2];
        let [a, b, c] = mesh.faces[face];
        let (va, vb, vc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
        let p = Point3::from(va.coords * bary[0] + vb.coords * bary[1] + vc.coords * bary[2]);
        points.push(p);
        samples.push(SurfaceSample {
            face,
            barycentric: bary,
        });
    }
    Ok((PointCloud::new(points)?, samples))
}
