//! Landmark sets, population-mean templates and surface projection.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{KdTree, Point3, PointCloud, RigidTransform, Vector3};

/// Named landmark coordinates in millimetres; order is canonical.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    names: Vec<String>,
    coords: Vec<Point3>,
}

#[derive(Serialize, Deserialize)]
struct LandmarkRecord {
    name: String,
    x: f64,
    y: f64,
    z: f64,
}

impl LandmarkSet {
    pub fn new(names: Vec<String>, coords: Vec<Point3>) -> Result<Self> {
        if names.len() != coords.len() {
            return Err(Error::Schema(format!(
                "{} names for {} coordinates",
                names.len(),
                coords.len()
            )));
        }
        let mut sorted: Vec<&String> = names.iter().collect();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Schema(format!("duplicate landmark name `{}`", w[0])));
        }
        if let Some(i) = coords.iter().position(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite(format!("landmark `{}`", names[i])));
        }
        Ok(Self { names, coords })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn coords(&self) -> &[Point3] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownLandmark(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<Point3> {
        Ok(self.coords[self.index_of(name)?])
    }

    pub fn same_schema(&self, other: &LandmarkSet) -> bool {
        self.names == other.names
    }

    pub fn ensure_same_schema(&self, other: &LandmarkSet) -> Result<()> {
        if self.same_schema(other) {
            Ok(())
        } else {
            Err(Error::Schema("landmark names or order differ".into()))
        }
    }

    pub fn with_coords(&self, coords: Vec<Point3>) -> Result<Self> {
        Self::new(self.names.clone(), coords)
    }

    pub fn apply_transform(&self, t: &RigidTransform) -> Self {
        Self {
            names: self.names.clone(),
            coords: self.coords.iter().map(|p| t.apply_point(p)).collect(),
        }
    }

    /// Keeps only the landmarks not listed in `drop`, preserving order.
    pub fn without(&self, drop: &[String]) -> Result<Self> {
        for d in drop {
            self.index_of(d)?;
        }
        let (names, coords) = self
            .names
            .iter()
            .zip(&self.coords)
            .filter(|(n, _)| !drop.contains(n))
            .map(|(n, p)| (n.clone(), *p))
            .unzip();
        Self::new(names, coords)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["name", "x", "y", "z"] {
            return Err(Error::format("landmark csv", "header must be `name,x,y,z`"));
        }
        let mut names = Vec::new();
        let mut coords = Vec::new();
        for rec in rdr.deserialize::<LandmarkRecord>() {
            let r = rec?;
            names.push(r.name);
            coords.push(Point3::new(r.x, r.y, r.z));
        }
        Self::new(names, coords)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in self.records() {
            w.serialize(r)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::format("landmark csv", e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::format("landmark csv", e.to_string()))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()?).map_err(|e| Error::io(path, e))
    }

    fn records(&self) -> Vec<LandmarkRecord> {
        self.names
            .iter()
            .zip(&self.coords)
            .map(|(n, p)| LandmarkRecord {
                name: n.clone(),
                x: p.x,
                y: p.y,
                z: p.z,
            })
            .collect()
    }

    /// JSON form: `{"landmarks": [{"name": .., "x": .., "y": .., "z": ..}, ..]}`.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc {
            landmarks: Vec<LandmarkRecord>,
        }
        Ok(serde_json::to_string_pretty(&Doc {
            landmarks: self.records(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            landmarks: Vec<LandmarkRecord>,
        }
        let doc: Doc = serde_json::from_str(text)?;
        let (names, coords) = doc
            .landmarks
            .into_iter()
            .map(|r| (r.name, Point3::new(r.x, r.y, r.z)))
            .unzip();
        Self::new(names, coords)
    }

    /// Reads CSV or JSON depending on the extension.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Self::from_json(&text)
        } else {
            Self::read_csv(path)
        }
    }
}

/// Coordinate-wise mean of sets sharing one schema. Sums run in input order.
pub fn mean_template(sets: &[LandmarkSet]) -> Result<LandmarkSet> {
    let first = sets
        .first()
        .ok_or_else(|| Error::Schema("mean of zero landmark sets".into()))?;
    for s in &sets[1..] {
        first.ensure_same_schema(s)?;
    }
    let n = sets.len() as f64;
    let coords = (0..first.len())
        .map(|k| {
            let sum = sets.iter().fold(Vector3::zeros(), |a, s| a + s.coords[k].coords);
            Point3::from(sum / n)
        })
        .collect();
    first.with_coords(coords)
}

/// Snaps every landmark to its nearest cloud vertex.
pub fn project_to_surface(template: &LandmarkSet, cloud: &PointCloud) -> LandmarkSet {
    project_with_index(template, cloud, &cloud.index())
}

pub(crate) fn project_with_index(template: &LandmarkSet, cloud: &PointCloud, tree: &KdTree) -> LandmarkSet {
    LandmarkSet {
        names: template.names.clone(),
        coords: template
            .coords
            .iter()
            .map(|p| tree.nearest(cloud.points(), p).point)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(coords: &[[f64; 3]]) -> LandmarkSet {
        LandmarkSet::new(
            (0..coords.len()).map(|i| format!("L{i}")).collect(),
            coords.iter().map(|c| Point3::new(c[0], c[1], c[2])).collect(),
        )
        .unwrap()
    }

    #[test]
    fn mean_of_one_and_two() {
        let a = set(&[[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]]);
        assert_eq!(mean_template(&[a.clone()]).unwrap(), a);
        let b = set(&[[2.0, 2.0, 2.0], [1.0, 2.0, 3.0]]);
        let m = mean_template(&[a.clone(), b]).unwrap();
        assert_eq!(m.coords()[0], Point3::new(1.0, 1.0, 1.0));
        let same = mean_template(&vec![a.clone(); 7]).unwrap();
        assert_eq!(same, a);
    }

    #[test]
    fn mean_rejects_mismatched_names() {
        let a = set(&[[0.0; 3]]);
        let b = LandmarkSet::new(vec!["other".into()], vec![Point3::origin()]).unwrap();
        assert!(mean_template(&[a, b]).is_err());
    }

    #[test]
    fn mean_commutes_with_rigid_motion() {
        let a = set(&[[0.0, 1.0, 2.0], [5.0, -1.0, 3.0]]);
        let b = set(&[[1.0, 1.0, 0.0], [4.0, 2.0, 1.0]]);
        let t = RigidTransform::from_axis_angle(&Vector3::new(1.0, 1.0, 0.0), 0.4, Vector3::new(3.0, 2.0, 1.0));
        let lhs = mean_template(&[a.apply_transform(&t), b.apply_transform(&t)]).unwrap();
        let rhs = mean_template(&[a, b]).unwrap().apply_transform(&t);
        for (p, q) in lhs.coords().iter().zip(rhs.coords()) {
            assert!((p - q).norm() < 1e-9);
        }
    }

    #[test]
    fn projection_snaps_to_vertices() {
        let cloud = PointCloud::new(vec![Point3::new(0.0, 0.0, 9.5), Point3::new(0.0, 0.0, 0.0)]).unwrap();
        let t = set(&[[0.0, 0.0, 10.0], [0.0, 0.0, 0.0]]);
        let p = project_to_surface(&t, &cloud);
        assert_eq!(p.coords(), &[Point3::new(0.0, 0.0, 9.5), Point3::origin()]);
        assert_eq!(project_to_surface(&p, &cloud), p);
    }

    #[test]
    fn csv_and_json_round_trip() {
        let a = set(&[[0.5, -1.25, 3.0], [1e-3, 2.0, 1e3]]);
        let csv = a.to_csv_string().unwrap();
        assert!(csv.starts_with("name,x,y,z\n"));
        assert_eq!(LandmarkSet::from_csv_reader(csv.as_bytes()).unwrap(), a);
        assert_eq!(LandmarkSet::from_json(&a.to_json().unwrap()).unwrap(), a);
    }

    #[test]
    fn rejects_bad_header_and_duplicates() {
        assert!(LandmarkSet::from_csv_reader("a,b,c,d\nx,1,2,3\n".as_bytes()).is_err());
        assert!(LandmarkSet::new(vec!["a".into(), "a".into()], vec![Point3::origin(); 2]).is_err());
    }
}
