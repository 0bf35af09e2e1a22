use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{canonical_face, generate_subject, FaceGenParams, SHAPE_COEFFICIENTS};
use crate::error::{Error, Result};
use crate::geometry::{sample_surface, write_ply_cloud, write_ply_mesh, BoundingBox};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub id: String,
    /// Paths relative to the dataset directory.
    pub mesh: String,
    pub landmarks: String,
    pub pose: [[f64; 4]; 4],
    pub coefficients: [f64; SHAPE_COEFFICIENTS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileChecksum {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub params: FaceGenParams,
    pub subjects: Vec<SubjectEntry>,
    /// Canonical reference cloud (PLY).
    pub reference: String,
    /// Canonical landmark positions (CSV).
    pub reference_landmarks: String,
    pub roi: BoundingBox,
    pub files: Vec<FileChecksum>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl DatasetManifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Re-hashes every listed file; returns the paths that differ.
    pub fn verify(&self, dir: impl AsRef<Path>) -> Result<Vec<String>> {
        let dir = dir.as_ref();
        let mut bad = Vec::new();
        for f in &self.files {
            if sha256_file(&dir.join(&f.path))? != f.sha256 {
                bad.push(f.path.clone());
            }
        }
        Ok(bad)
    }

    pub fn path(&self, dir: impl AsRef<Path>, rel: &str) -> PathBuf {
        dir.as_ref().join(rel)
    }
}

/// Writes `n_subjects` posed faces, the canonical reference cloud, its ROI
/// box and a checksummed manifest into `dir`.
pub fn generate_dataset(params: &FaceGenParams, n_subjects: usize, dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    params.validate()?;
    if n_subjects == 0 {
        return Err(Error::config("generate.subjects", "must be >= 1"));
    }
    let dir = dir.as_ref();
    for sub in ["meshes", "landmarks"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut files = Vec::new();
    let mut record = |rel: &str| -> Result<()> {
        files.push(FileChecksum {
            path: rel.to_string(),
            sha256: sha256_file(&dir.join(rel))?,
        });
        Ok(())
    };

    let (canonical, canonical_lm) = canonical_face(params)?;
    let reference = sample_surface(&canonical, params.reference_points, params.seed)?;
    write_ply_cloud(dir.join("reference.ply"), &reference)?;
    record("reference.ply")?;
    canonical_lm.write_csv(dir.join("reference_landmarks.csv"))?;
    record("reference_landmarks.csv")?;

    let mut subjects = Vec::with_capacity(n_subjects);
    for i in 0..n_subjects {
        let s = generate_subject(params, i)?;
        let id = format!("subject_{i:03}");
        let mesh = format!("meshes/{id}.ply");
        let landmarks = format!("landmarks/{id}.csv");
        write_ply_mesh(dir.join(&mesh), &s.mesh)?;
        s.landmarks.write_csv(dir.join(&landmarks))?;
        record(&mesh)?;
        record(&landmarks)?;
        subjects.push(SubjectEntry {
            id,
            mesh,
            landmarks,
            pose: s.pose.to_rows(),
            coefficients: s.coefficients,
        });
    }
    let manifest = DatasetManifest {
        params: params.clone(),
        subjects,
        reference: "reference.ply".into(),
        reference_landmarks: "reference_landmarks.csv".into(),
        roi: params.roi(),
        files,
    };
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::LandmarkSet;
    use crate::geometry::load_mesh;

    #[test]
    fn writes_dataset_with_checksums() {
        let params = FaceGenParams {
            resolution: [40, 30],
            reference_points: 500,
            ..FaceGenParams::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(&params, 3, dir.path()).unwrap();
        assert_eq!(m.subjects.len(), 3);
        assert_eq!(std::fs::read_dir(dir.path().join("meshes")).unwrap().count(), 3);
        assert_eq!(m.files.len(), 2 + 2 * 3);
        assert!(m.verify(dir.path()).unwrap().is_empty());
        let back = DatasetManifest::load(dir.path()).unwrap();
        assert_eq!(back, m);
        let lm = LandmarkSet::load(dir.path().join(&m.subjects[0].landmarks)).unwrap();
        assert_eq!(lm.len(), 50);
        let mesh = load_mesh(dir.path().join(&m.subjects[0].mesh)).unwrap();
        assert_eq!(mesh.vertex_count(), 41 * 31);
        std::fs::write(dir.path().join(&m.subjects[1].landmarks), "name,x,y,z\n").unwrap();
        assert_eq!(m.verify(dir.path()).unwrap(), vec![m.subjects[1].landmarks.clone()]);
    }

    #[test]
    fn landmarks_vary_between_subjects() {
        let params = FaceGenParams {
            resolution: [20, 20],
            max_rotation_deg: 0.0,
            max_translation_mm: 0.0,
            ..FaceGenParams::default()
        };
        let sets: Vec<LandmarkSet> = (0..6).map(|i| generate_subject(&params, i).unwrap().landmarks).collect();
        let mut total = 0.0;
        let mut count = 0;
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                for (a, b) in sets[i].coords().iter().zip(sets[j].coords()) {
                    total += (a - b).norm();
                    count += 1;
                }
            }
        }
        assert!(total / count as f64 > 1.0);
    }
}
