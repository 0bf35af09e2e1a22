use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{region_of, Region};

/// A named linear distance between two landmarks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceDef {
    #[serde(default)]
    pub group: String,
    pub a: String,
    pub b: String,
    /// Optional intra-observer reference value (mm) carried into reports.
    #[serde(default)]
    pub intra: Option<f64>,
}

/// An angle at `vertex` between rays to `a` and `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleDef {
    pub a: String,
    pub vertex: String,
    pub c: String,
    #[serde(default)]
    pub intra: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSpec {
    pub distances: Vec<DistanceDef>,
    pub angles: Vec<AngleDef>,
    /// Region overrides; unlisted names fall back to their `_R`/`_L` suffix.
    #[serde(default)]
    pub regions: BTreeMap<String, Region>,
}

fn dist(group: &str, a: &str, b: &str) -> DistanceDef {
    DistanceDef {
        group: group.into(),
        a: a.into(),
        b: b.into(),
        intra: None,
    }
}

fn angle(a: &str, vertex: &str, c: &str) -> AngleDef {
    AngleDef {
        a: a.into(),
        vertex: vertex.into(),
        c: c.into(),
        intra: None,
    }
}

impl Default for MeasurementSpec {
    /// Clinical distances and angles over the facial schema.
    fn default() -> Self {
        let f = "frontal";
        let h = "horizontal";
        let r = "sagittal_right";
        let l = "sagittal_left";
        Self {
            distances: vec![
                dist(f, "Tr", "N"),
                dist(f, "N", "Pg"),
                dist(f, "N", "Sn"),
                dist(f, "Sn", "Pg"),
                dist(h, "Ex_R", "Ex_L"),
                dist(h, "Zy_R", "Zy_L"),
                dist(h, "T_R", "T_L"),
                dist(h, "Ch_R", "Ch_L"),
                dist(h, "Cph_R", "Cph_L"),
                dist(h, "Go_R", "Go_L"),
                dist(r, "T_R", "N"),
                dist(r, "T_R", "Sn"),
                dist(r, "T_R", "Pg"),
                dist(r, "Pg", "Go_R"),
                dist(r, "T_R", "Go_R"),
                dist(l, "T_L", "N"),
                dist(l, "T_L", "Sn"),
                dist(l, "T_L", "Pg"),
                dist(l, "Pg", "Go_L"),
                dist(l, "T_L", "Go_L"),
            ],
            angles: vec![
                angle("T_R", "N", "T_L"),
                angle("T_R", "Prn", "T_L"),
                angle("T_R", "Pg", "T_L"),
                angle("Go_R", "Pg", "Go_L"),
                angle("N", "Sn", "Pg"),
                angle("N", "Prn", "Pg"),
                angle("Sn", "N", "Prn"),
                angle("T_R", "Go_R", "Pg"),
                angle("T_L", "Go_L", "Pg"),
            ],
            regions: BTreeMap::new(),
        }
    }
}

impl MeasurementSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn region(&self, name: &str) -> Region {
        self.regions.get(name).copied().unwrap_or_else(|| region_of(name))
    }

    /// Errors on the first name missing from `names`.
    pub fn check(&self, names: &[String]) -> Result<()> {
        for n in self.referenced() {
            if !names.iter().any(|x| x == n) {
                return Err(Error::UnknownLandmark(n.to_string()));
            }
        }
        Ok(())
    }

    /// Copy keeping only measurements whose landmarks are all in `names`.
    pub fn restricted_to(&self, names: &[String]) -> Self {
        let has = |n: &str| names.iter().any(|x| x == n);
        Self {
            distances: self.distances.iter().filter(|d| has(&d.a) && has(&d.b)).cloned().collect(),
            angles: self
                .angles
                .iter()
                .filter(|a| has(&a.a) && has(&a.vertex) && has(&a.c))
                .cloned()
                .collect(),
            regions: self.regions.clone(),
        }
    }

    fn referenced(&self) -> impl Iterator<Item = &str> {
        self.distances
            .iter()
            .flat_map(|d| [d.a.as_str(), d.b.as_str()])
            .chain(self.angles.iter().flat_map(|a| [a.a.as_str(), a.vertex.as_str(), a.c.as_str()]))
    }
}
