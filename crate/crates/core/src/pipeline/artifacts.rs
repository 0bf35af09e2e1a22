use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::atlas::LandmarkSet;
use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform};

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectCoords {
    pub id: String,
    pub coords: Vec<[f64; 3]>,
}

/// Landmark sets of many subjects sharing one schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkTable {
    pub names: Vec<String>,
    pub subjects: Vec<SubjectCoords>,
}

impl LandmarkTable {
    pub fn from_sets(ids: &[String], sets: &[LandmarkSet]) -> Result<Self> {
        let first = sets
            .first()
            .ok_or_else(|| Error::Schema("empty landmark table".into()))?;
        let subjects = ids
            .iter()
            .zip(sets)
            .map(|(id, s)| {
                first.ensure_same_schema(s)?;
                Ok(SubjectCoords {
                    id: id.clone(),
                    coords: s.coords().iter().map(|p| [p.x, p.y, p.z]).collect(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            names: first.names().to_vec(),
            subjects,
        })
    }

    pub fn set(&self, i: usize) -> Result<LandmarkSet> {
        let coords = self.subjects[i].coords.iter().map(|c| Point3::new(c[0], c[1], c[2])).collect();
        LandmarkSet::new(self.names.clone(), coords)
    }

    pub fn sets(&self) -> Result<Vec<LandmarkSet>> {
        (0..self.subjects.len()).map(|i| self.set(i)).collect()
    }
}

/// Registration outcome of one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub id: String,
    /// `T_final`, row-major homogeneous matrix.
    pub transform: [[f64; 4]; 4],
    pub coarse: [[f64; 4]; 4],
    pub fine: [[f64; 4]; 4],
    pub ransac_inlier_fraction: f64,
    pub icp_rms: f64,
}

impl AlignmentRecord {
    pub fn transform(&self) -> Result<RigidTransform> {
        RigidTransform::from_rows(self.transform)
    }
}
