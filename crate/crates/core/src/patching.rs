//! Per-landmark local patches, ordered by distance to a fixed origin and
//! stacked into the network input tensor.

use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::atlas::LandmarkSet;
use crate::error::{Error, Result};
use crate::geometry::{KdTree, Point3, PointCloud};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatchStrategy {
    /// The `k` nearest cloud points.
    Knn { k: usize },
    /// Every point within `radius` mm, resampled to exactly `k` points.
    Radius { radius: f64, k: usize },
}

impl PatchStrategy {
    pub fn points(&self) -> usize {
        match *self {
            PatchStrategy::Knn { k } | PatchStrategy::Radius { k, .. } => k,
        }
    }
}

/// Which surface representation patches are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatchSource {
    /// The aligned full-resolution mesh vertices.
    Vertices,
    /// A uniform surface resampling of the aligned mesh.
    Resampled { points: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchConfig {
    pub strategy: PatchStrategy,
    pub source: PatchSource,
    /// Sort each patch by distance to `origin`; when false the points are
    /// shuffled instead.
    pub ordered: bool,
    pub origin: [f64; 3],
    pub seed: u64,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self {
            strategy: PatchStrategy::Knn { k: 1000 },
            source: PatchSource::Vertices,
            ordered: true,
            origin: [0.0; 3],
            seed: 0,
        }
    }
}

impl PatchConfig {
    pub fn validate(&self) -> Result<()> {
        match self.strategy {
            PatchStrategy::Knn { k } if k == 0 => Err(Error::config("patch.strategy.k", "must be >= 1")),
            PatchStrategy::Radius { radius, k } => {
                if !(radius > 0.0) {
                    Err(Error::config("patch.strategy.radius", "must be > 0"))
                } else if k == 0 {
                    Err(Error::config("patch.strategy.k", "must be >= 1"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// The `k` nearest points to `center` (ties by index).
pub fn extract_knn_patch(cloud: &PointCloud, tree: &KdTree, center: &Point3, k: usize) -> Result<Vec<Point3>> {
    Ok(tree
        .knn(cloud.points(), center, k)?
        .into_iter()
        .map(|n| n.point)
        .collect())
}

/// Radius query resampled to exactly `k` points: without replacement when
/// there are at least `k` hits, with replacement otherwise. `Ok(None)` when
/// nothing lies within `radius`.
pub fn extract_radius_patch<R: Rng>(
    cloud: &PointCloud,
    tree: &KdTree,
    center: &Point3,
    radius: f64,
    k: usize,
    rng: &mut R,
) -> Option<Vec<Point3>> {
    let hits = tree.radius(cloud.points(), center, radius);
    if hits.is_empty() {
        return None;
    }
    Some(if hits.len() == k {
        hits.into_iter().map(|n| n.point).collect()
    } else if hits.len() > k {
        let mut chosen = index::sample(rng, hits.len(), k).into_vec();
        chosen.sort_unstable();
        chosen.into_iter().map(|i| hits[i].point).collect()
    } else {
        (0..k).map(|_| hits[rng.random_range(0..hits.len())].point).collect()
    })
}

/// Stable sort by Euclidean distance to `origin`.
pub fn order_patch(patch: &[Point3], origin: &Point3) -> Vec<Point3> {
    let mut keyed: Vec<(f64, Point3)> = patch.iter().map(|p| ((p - origin).norm(), *p)).collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    keyed.into_iter().map(|(_, p)| p).collect()
}

/// Input to [`build_patch_tensor`] for one subject.
pub struct PatchSubject<'a> {
    /// Dataset-wide subject index; seeds the subject's random streams.
    pub index: usize,
    pub cloud: &'a PointCloud,
    pub centers: &'a LandmarkSet,
}

/// Stacked patches, `subjects x landmarks x points x 3`, in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchTensor {
    pub shape: [usize; 4],
    pub data: Vec<f32>,
    pub config: PatchConfig,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    shape: [usize; 4],
    dtype: String,
    byte_order: String,
    #[serde(flatten)]
    config: PatchConfig,
}

impl PatchTensor {
    pub fn subjects(&self) -> usize {
        self.shape[0]
    }

    pub fn landmarks(&self) -> usize {
        self.shape[1]
    }

    pub fn points(&self) -> usize {
        self.shape[2]
    }

    /// The data as an `m x n x K x 3` array view.
    pub fn view(&self) -> ndarray::ArrayView4<'_, f32> {
        let [m, n, k, c] = self.shape;
        ndarray::ArrayView4::from_shape((m, n, k, c), &self.data).expect("shape matches data")
    }

    fn subject_len(&self) -> usize {
        self.shape[1] * self.shape[2] * 3
    }

    pub fn subject_slice(&self, s: usize) -> &[f32] {
        let n = self.subject_len();
        &self.data[s * n..(s + 1) * n]
    }

    pub fn patch(&self, s: usize, l: usize) -> Vec<Point3> {
        let k = self.shape[2];
        let base = (s * self.shape[1] + l) * k * 3;
        (0..k)
            .map(|i| {
                let o = base + i * 3;
                Point3::new(self.data[o] as f64, self.data[o + 1] as f64, self.data[o + 2] as f64)
            })
            .collect()
    }

    /// New tensor holding the listed subjects, in the given order.
    pub fn select(&self, subjects: &[usize]) -> PatchTensor {
        let mut data = Vec::with_capacity(subjects.len() * self.subject_len());
        for &s in subjects {
            data.extend_from_slice(self.subject_slice(s));
        }
        PatchTensor {
            shape: [subjects.len(), self.shape[1], self.shape[2], 3],
            data,
            config: self.config.clone(),
        }
    }

    /// Writes `<stem>.bin` (little-endian f32) and `<stem>.json`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let bin = dir.join(format!("{stem}.bin"));
        fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
        let side = Sidecar {
            shape: self.shape,
            dtype: "float32".into(),
            byte_order: "little".into(),
            config: self.config.clone(),
        };
        let json = dir.join(format!("{stem}.json"));
        fs::write(&json, serde_json::to_string_pretty(&side)?).map_err(|e| Error::io(&json, e))
    }

    pub fn load(dir: impl AsRef<Path>, stem: &str) -> Result<Self> {
        let dir = dir.as_ref();
        let json = dir.join(format!("{stem}.json"));
        let side: Sidecar = serde_json::from_str(&fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?)?;
        let bin = dir.join(format!("{stem}.bin"));
        let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        let expected: usize = side.shape.iter().product();
        if bytes.len() != expected * 4 || side.shape[3] != 3 {
            return Err(Error::format("patch tensor", format!("{} bytes for shape {:?}", bytes.len(), side.shape)));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            shape: side.shape,
            data,
            config: side.config,
        })
    }
}

/// Extracts, orders and stacks one patch per (subject, landmark).
pub fn build_patch_tensor(subjects: &[PatchSubject<'_>], cfg: &PatchConfig) -> Result<PatchTensor> {
    cfg.validate()?;
    let n_l = subjects
        .first()
        .map(|s| s.centers.len())
        .ok_or_else(|| Error::Shape("no subjects to patch".into()))?;
    if let Some(s) = subjects.iter().find(|s| s.centers.len() != n_l) {
        return Err(Error::Schema(format!(
            "subject {} has {} landmarks, expected {n_l}",
            s.index,
            s.centers.len()
        )));
    }
    let k = cfg.strategy.points();
    let origin = Point3::new(cfg.origin[0], cfg.origin[1], cfg.origin[2]);
    let mut data = Vec::with_capacity(subjects.len() * n_l * k * 3);
    for subject in subjects {
        let tree = subject.cloud.index();
        for (l, center) in subject.centers.coords().iter().enumerate() {
            let mut rng = stream(cfg.seed, &[subject.index as u64, l as u64]);
            let patch = match cfg.strategy {
                PatchStrategy::Knn { k } => extract_knn_patch(subject.cloud, &tree, center, k)?,
                PatchStrategy::Radius { radius, k } => {
                    extract_radius_patch(subject.cloud, &tree, center, radius, k, &mut rng).ok_or_else(|| {
                        Error::EmptyPatch {
                            subject: subject.index,
                            landmark: subject.centers.names()[l].clone(),
                            radius,
                        }
                    })?
                }
            };
            let patch = if cfg.ordered {
                order_patch(&patch, &origin)
            } else {
                let mut p = patch;
                p.shuffle(&mut rng);
                p
            };
            for p in patch {
                data.extend([p.x as f32, p.y as f32, p.z as f32]);
            }
        }
    }
    Ok(PatchTensor {
        shape: [subjects.len(), n_l, k, 3],
        data,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid_cloud(n: usize) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        PointCloud::new(
            (0..n)
                .map(|_| Point3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-5.0..5.0)))
                .collect(),
        )
        .unwrap()
    }

    fn centers(pts: &[[f64; 3]]) -> LandmarkSet {
        LandmarkSet::new(
            (0..pts.len()).map(|i| format!("L{i}")).collect(),
            pts.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect(),
        )
        .unwrap()
    }

    #[test]
    fn knn_patch_edge_cases() {
        let cloud = grid_cloud(50);
        let tree = cloud.index();
        let all = extract_knn_patch(&cloud, &tree, &Point3::origin(), 50).unwrap();
        assert_eq!(all.len(), 50);
        let one = extract_knn_patch(&cloud, &tree, &cloud.points()[7], 1).unwrap();
        assert_eq!(one, vec![cloud.points()[7]]);
        assert!(extract_knn_patch(&cloud, &tree, &Point3::origin(), 51).is_err());
    }

    #[test]
    fn knn_patch_matches_exhaustive_scan() {
        let cloud = grid_cloud(10_000);
        let tree = cloud.index();
        let c = Point3::new(3.0, -7.0, 0.5);
        let got = extract_knn_patch(&cloud, &tree, &c, 1000).unwrap();
        let mut all: Vec<(f64, usize)> = cloud.points().iter().enumerate().map(|(i, p)| ((p - c).norm_squared(), i)).collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let want: Vec<Point3> = all[..1000].iter().map(|&(_, i)| cloud.points()[i]).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn radius_patch_resampling_contract() {
        let cloud = PointCloud::new((0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect()).unwrap();
        let tree = cloud.index();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // Exactly k hits: returned as found.
        let exact = extract_radius_patch(&cloud, &tree, &Point3::origin(), 4.5, 5, &mut rng).unwrap();
        assert_eq!(exact, (0..5).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect::<Vec<_>>());
        // 2k hits: k distinct points within the radius.
        let sub = extract_radius_patch(&cloud, &tree, &Point3::origin(), 9.5, 5, &mut rng).unwrap();
        let mut xs: Vec<i64> = sub.iter().map(|p| p.x as i64).collect();
        xs.dedup();
        assert_eq!(xs.len(), 5);
        // Fewer hits than k: exactly k rows drawn from the hits.
        let up = extract_radius_patch(&cloud, &tree, &Point3::origin(), 2.5, 8, &mut rng).unwrap();
        assert_eq!(up.len(), 8);
        assert!(up.iter().all(|p| p.x <= 2.0));
        assert!(extract_radius_patch(&cloud, &tree, &Point3::new(100.0, 0.0, 0.0), 1.0, 3, &mut rng).is_none());
    }

    #[test]
    fn ordering_by_origin_distance() {
        let p = vec![Point3::new(3.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)];
        let o = order_patch(&p, &Point3::origin());
        assert_eq!(o, vec![p[1], p[2], p[0]]);
        assert_eq!(order_patch(&o, &Point3::origin()), o);
    }

    #[test]
    fn tensor_shape_membership_and_permutation() {
        let cloud = grid_cloud(2000);
        let c = centers(&[[0.0, 0.0, 0.0], [20.0, 10.0, 0.0]]);
        let subj = [PatchSubject { index: 0, cloud: &cloud, centers: &c }];
        let cfg = PatchConfig {
            strategy: PatchStrategy::Knn { k: 100 },
            ..Default::default()
        };
        let t = build_patch_tensor(&subj, &cfg).unwrap();
        assert_eq!(t.shape, [1, 2, 100, 3]);
        let members: Vec<[f32; 3]> = cloud.points().iter().map(|p| [p.x as f32, p.y as f32, p.z as f32]).collect();
        for row in t.data.chunks(3) {
            assert!(members.contains(&[row[0], row[1], row[2]]));
        }
        let unordered = build_patch_tensor(&subj, &PatchConfig { ordered: false, ..cfg.clone() }).unwrap();
        for l in 0..2 {
            let key = |p: &Point3| (p.x.to_bits(), p.y.to_bits(), p.z.to_bits());
            let mut a: Vec<_> = t.patch(0, l).iter().map(key).collect();
            let mut b: Vec<_> = unordered.patch(0, l).iter().map(key).collect();
            assert_ne!(a, b);
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn empty_radius_patch_names_landmark() {
        let cloud = grid_cloud(100);
        let c = centers(&[[500.0, 0.0, 0.0]]);
        let subj = [PatchSubject { index: 3, cloud: &cloud, centers: &c }];
        let cfg = PatchConfig {
            strategy: PatchStrategy::Radius { radius: 1.0, k: 10 },
            ..Default::default()
        };
        let err = build_patch_tensor(&subj, &cfg).unwrap_err();
        assert!(matches!(err, Error::EmptyPatch { subject: 3, ref landmark, .. } if landmark == "L0"));
    }

    #[test]
    fn save_load_round_trip() {
        let cloud = grid_cloud(300);
        let c = centers(&[[0.0, 0.0, 0.0]]);
        let subj = [PatchSubject { index: 0, cloud: &cloud, centers: &c }];
        let t = build_patch_tensor(&subj, &PatchConfig { strategy: PatchStrategy::Radius { radius: 15.0, k: 20 }, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        t.save(dir.path(), "patches").unwrap();
        assert_eq!(PatchTensor::load(dir.path(), "patches").unwrap(), t);
    }
}
