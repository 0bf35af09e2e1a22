use serde::{Deserialize, Serialize};

use super::MeasurementSpec;
use crate::atlas::LandmarkSet;
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::schema::Region;

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

fn check_pairs(pred: &[LandmarkSet], gt: &[LandmarkSet]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Schema(format!("{} predictions for {} ground-truth sets", pred.len(), gt.len())));
    }
    let first = gt.first().ok_or_else(|| Error::Schema("no subjects to evaluate".into()))?;
    for (p, g) in pred.iter().zip(gt) {
        first.ensure_same_schema(g)?;
        g.ensure_same_schema(p)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkError {
    pub name: String,
    pub region: Region,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseErrors {
    pub per_landmark: Vec<LandmarkError>,
    /// Mean of per-landmark means ± mean of per-landmark standard deviations.
    pub overall: Stat,
    /// Mean and std over every (subject, landmark) error.
    pub pooled: Stat,
    /// `errors[s][k]` in mm.
    #[serde(skip)]
    pub errors: Vec<Vec<f64>>,
}

/// Euclidean error of every landmark, aggregated over subjects.
pub fn pointwise_errors(pred: &[LandmarkSet], gt: &[LandmarkSet], spec: &MeasurementSpec) -> Result<PointwiseErrors> {
    check_pairs(pred, gt)?;
    let errors: Vec<Vec<f64>> = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| p.coords().iter().zip(g.coords()).map(|(a, b)| (a - b).norm()).collect())
        .collect();
    let names = gt[0].names();
    let per_landmark: Vec<LandmarkError> = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let col: Vec<f64> = errors.iter().map(|e| e[k]).collect();
            let s = Stat::of(&col);
            LandmarkError {
                name: name.clone(),
                region: spec.region(name),
                mean: s.mean,
                std: s.std,
            }
        })
        .collect();
    let n = per_landmark.len() as f64;
    let overall = Stat {
        mean: per_landmark.iter().map(|l| l.mean).sum::<f64>() / n,
        std: per_landmark.iter().map(|l| l.std).sum::<f64>() / n,
    };
    let flat: Vec<f64> = errors.iter().flatten().copied().collect();
    Ok(PointwiseErrors {
        per_landmark,
        overall,
        pooled: Stat::of(&flat),
        errors,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Mean of off-diagonal entries.
    pub mean: f64,
}

/// `(i, j)` = mean over subjects of `| |p_i - p_j| - |g_i - g_j| |`.
pub fn distance_error_matrix(pred: &[LandmarkSet], gt: &[LandmarkSet]) -> Result<DistanceMatrix> {
    check_pairs(pred, gt)?;
    let n = gt[0].len();
    let mut values = vec![vec![0.0; n]; n];
    for (p, g) in pred.iter().zip(gt) {
        let (pc, gc) = (p.coords(), g.coords());
        for i in 0..n {
            for j in i + 1..n {
                let e = ((pc[i] - pc[j]).norm() - (gc[i] - gc[j]).norm()).abs();
                values[i][j] += e;
            }
        }
    }
    let m = pred.len() as f64;
    let mut off = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            values[i][j] /= m;
            values[j][i] = values[i][j];
            off += 2.0 * values[i][j];
        }
    }
    let mean = if n > 1 { off / (n * (n - 1)) as f64 } else { 0.0 };
    Ok(DistanceMatrix {
        names: gt[0].names().to_vec(),
        values,
        mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub group: String,
    pub a: String,
    pub b: String,
    pub intra: Option<f64>,
    /// Mean absolute distance error (mm).
    pub error: f64,
    /// Mean ground-truth distance (mm).
    pub reference: f64,
    /// `100 * error / reference`.
    pub percent: f64,
}

pub fn linear_distance_report(pred: &[LandmarkSet], gt: &[LandmarkSet], spec: &MeasurementSpec) -> Result<Vec<LinearRow>> {
    check_pairs(pred, gt)?;
    spec.check(gt[0].names())?;
    spec.distances
        .iter()
        .map(|d| {
            let (ia, ib) = (gt[0].index_of(&d.a)?, gt[0].index_of(&d.b)?);
            let mut err = 0.0;
            let mut reference = 0.0;
            for (p, g) in pred.iter().zip(gt) {
                let dp = (p.coords()[ia] - p.coords()[ib]).norm();
                let dg = (g.coords()[ia] - g.coords()[ib]).norm();
                err += (dp - dg).abs();
                reference += dg;
            }
            let m = pred.len() as f64;
            let (error, reference) = (err / m, reference / m);
            Ok(LinearRow {
                group: d.group.clone(),
                a: d.a.clone(),
                b: d.b.clone(),
                intra: d.intra,
                error,
                reference,
                percent: 100.0 * error / reference,
            })
        })
        .collect()
}

/// Angle at `vertex` in degrees; the cosine is clamped to `[-1, 1]`.
pub fn angle_deg(a: &Point3, vertex: &Point3, c: &Point3) -> Option<f64> {
    let u = a - vertex;
    let v = c - vertex;
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return None;
    }
    Some((u.dot(&v) / (nu * nv)).clamp(-1.0, 1.0).acos().to_degrees())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleRow {
    pub a: String,
    pub vertex: String,
    pub c: String,
    pub intra: Option<f64>,
    /// Mean absolute angle error (degrees).
    pub error: f64,
    /// Mean ground-truth angle (degrees).
    pub reference: f64,
    pub percent: f64,
}

pub fn angle_report(pred: &[LandmarkSet], gt: &[LandmarkSet], spec: &MeasurementSpec) -> Result<Vec<AngleRow>> {
    check_pairs(pred, gt)?;
    spec.check(gt[0].names())?;
    spec.angles
        .iter()
        .map(|t| {
            let idx = [gt[0].index_of(&t.a)?, gt[0].index_of(&t.vertex)?, gt[0].index_of(&t.c)?];
            let label = || format!("{}-{}-{}", t.a, t.vertex, t.c);
            let mut err = 0.0;
            let mut reference = 0.0;
            for (s, (p, g)) in pred.iter().zip(gt).enumerate() {
                let at = |set: &LandmarkSet| {
                    let c = set.coords();
                    angle_deg(&c[idx[0]], &c[idx[1]], &c[idx[2]])
                        .ok_or_else(|| Error::DegenerateAngle(format!("{} (subject {s})", label())))
                };
                let (ap, ag) = (at(p)?, at(g)?);
                err += (ap - ag).abs();
                reference += ag;
            }
            let m = pred.len() as f64;
            let (error, reference) = (err / m, reference / m);
            Ok(AngleRow {
                a: t.a.clone(),
                vertex: t.vertex.clone(),
                c: t.c.clone(),
                intra: t.intra,
                error,
                reference,
                percent: 100.0 * error / reference,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub count: usize,
    pub mean_difference: f64,
    pub std: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Agreement {
    fn of(diffs: &[f64]) -> Self {
        let s = Stat::of(diffs);
        Self {
            count: diffs.len(),
            mean_difference: s.mean,
            std: s.std,
            lower: s.mean - 1.96 * s.std,
            upper: s.mean + 1.96 * s.std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltmanGroup {
    pub region: Region,
    /// All three coordinate differences pooled.
    pub pooled: Agreement,
    /// x, y, z separately.
    pub per_axis: [Agreement; 3],
}

/// One scatter point: coordinate mean `(pred + gt) / 2` against `pred - gt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltmanPoint {
    pub region: Region,
    pub subject: usize,
    pub landmark: String,
    pub axis: char,
    pub mean: f64,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    pub groups: Vec<BlandAltmanGroup>,
    #[serde(skip)]
    pub scatter: Vec<BlandAltmanPoint>,
}

/// Agreement statistics of coordinate differences per region. Regions with
/// no landmarks are omitted; an input where no region has landmarks errors.
pub fn bland_altman(pred: &[LandmarkSet], gt: &[LandmarkSet], spec: &MeasurementSpec) -> Result<BlandAltman> {
    check_pairs(pred, gt)?;
    let names = gt[0].names();
    let mut scatter = Vec::new();
    let mut groups = Vec::new();
    for region in [Region::Midline, Region::Right, Region::Left] {
        let members: Vec<usize> = (0..names.len()).filter(|&k| spec.region(&names[k]) == region).collect();
        if members.is_empty() {
            continue;
        }
        let mut axes: [Vec<f64>; 3] = Default::default();
        for (s, (p, g)) in pred.iter().zip(gt).enumerate() {
            for &k in &members {
                for (axis, label) in ['x', 'y', 'z'].into_iter().enumerate() {
                    let (pv, gv) = (p.coords()[k][axis], g.coords()[k][axis]);
                    axes[axis].push(pv - gv);
                    scatter.push(BlandAltmanPoint {
                        region,
                        subject: s,
                        landmark: names[k].clone(),
                        axis: label,
                        mean: 0.5 * (pv + gv),
                        difference: pv - gv,
                    });
                }
            }
        }
        let pooled: Vec<f64> = axes.iter().flatten().copied().collect();
        groups.push(BlandAltmanGroup {
            region,
            pooled: Agreement::of(&pooled),
            per_axis: [Agreement::of(&axes[0]), Agreement::of(&axes[1]), Agreement::of(&axes[2])],
        });
    }
    if groups.is_empty() {
        return Err(Error::Schema("no landmarks in any region".into()));
    }
    Ok(BlandAltman { groups, scatter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{AngleDef, DistanceDef};
    use nalgebra::{Rotation3, Vector3};

    fn set(names: &[&str], coords: &[[f64; 3]]) -> LandmarkSet {
        LandmarkSet::new(
            names.iter().map(|s| s.to_string()).collect(),
            coords.iter().map(|c| Point3::new(c[0], c[1], c[2])).collect(),
        )
        .unwrap()
    }

    fn random_sets(count: usize, seed: u64) -> Vec<LandmarkSet> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let names: Vec<String> = (0..6).map(|i| format!("P{i}_R")).collect();
        (0..count)
            .map(|_| {
                LandmarkSet::new(
                    names.clone(),
                    (0..6)
                        .map(|_| Point3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)))
                        .collect(),
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn pointwise_basics() {
        let spec = MeasurementSpec::default();
        let gt = vec![set(&["A", "B"], &[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])];
        let zero = pointwise_errors(&gt, &gt, &spec).unwrap();
        assert_eq!(zero.overall, Stat::default());
        let pred = vec![set(&["A", "B"], &[[3.0, 4.0, 0.0], [1.0, 1.0, 1.0]])];
        let e = pointwise_errors(&pred, &gt, &spec).unwrap();
        assert_eq!(e.per_landmark[0].mean, 5.0);
        let gt2 = vec![gt[0].clone(), gt[0].clone()];
        let pred2 = vec![
            set(&["A", "B"], &[[2.0, 0.0, 0.0], [1.0, 1.0, 1.0]]),
            set(&["A", "B"], &[[0.0, 4.0, 0.0], [1.0, 1.0, 1.0]]),
        ];
        let e = pointwise_errors(&pred2, &gt2, &spec).unwrap();
        assert_eq!(e.per_landmark[0].mean, 3.0);
        assert_eq!(e.per_landmark[0].std, 1.0);
        let other = vec![set(&["A", "C"], &[[0.0; 3], [1.0; 3]])];
        assert!(pointwise_errors(&other, &gt, &spec).is_err());
    }

    #[test]
    fn matrix_hand_case_and_invariants() {
        let gt = vec![set(&["A", "B"], &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])];
        let pred = vec![set(&["A", "B"], &[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])];
        let m = distance_error_matrix(&pred, &gt).unwrap();
        assert_eq!(m.values, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(m.mean, 1.0);
        let gts = random_sets(4, 1);
        let rot = Rotation3::from_euler_angles(0.4, 0.1, -0.7);
        let moved: Vec<LandmarkSet> = gts
            .iter()
            .map(|g| g.with_coords(g.coords().iter().map(|p| rot * p + Vector3::new(5.0, -3.0, 2.0)).collect()).unwrap())
            .collect();
        let m = distance_error_matrix(&moved, &gts).unwrap();
        assert!(m.values.iter().flatten().all(|&v| v < 1e-9));
        let preds = random_sets(4, 2).iter().zip(&gts).map(|(p, g)| g.with_coords(p.coords().to_vec()).unwrap()).collect::<Vec<_>>();
        let m = distance_error_matrix(&preds, &gts).unwrap();
        for i in 0..6 {
            assert_eq!(m.values[i][i], 0.0);
            for j in 0..6 {
                assert_eq!(m.values[i][j], m.values[j][i]);
            }
        }
        let pw = pointwise_errors(&preds, &gts, &MeasurementSpec::default()).unwrap();
        assert!(m.mean <= 2.0 * pw.overall.mean);
    }

    fn face_like(offset: f64) -> LandmarkSet {
        let names = crate::schema::facial_names();
        let coords = (0..names.len())
            .map(|k| {
                let t = k as f64;
                Point3::new(40.0 * (t * 0.7).sin() + offset, 30.0 * (t * 1.3).cos(), 10.0 * (t * 0.37).sin())
            })
            .collect();
        LandmarkSet::new(names, coords).unwrap()
    }

    #[test]
    fn linear_report_ratio_uses_ground_truth() {
        let spec = MeasurementSpec {
            distances: vec![DistanceDef {
                group: "g".into(),
                a: "A".into(),
                b: "B".into(),
                intra: Some(0.5),
            }],
            angles: vec![],
            regions: Default::default(),
        };
        let gt = vec![set(&["A", "B"], &[[0.0; 3], [100.0, 0.0, 0.0]]); 3];
        let pred = vec![set(&["A", "B"], &[[0.0; 3], [104.0, 0.0, 0.0]]); 3];
        let rows = linear_distance_report(&pred, &gt, &spec).unwrap();
        assert!((rows[0].error - 4.0).abs() < 1e-12);
        assert!((rows[0].percent - 4.0).abs() < 1e-12);
        // Swapping roles changes the denominator to 104.
        let swapped = linear_distance_report(&gt, &pred, &spec).unwrap();
        assert!((swapped[0].percent - 400.0 / 104.0).abs() < 1e-12);
        let zero = linear_distance_report(&gt, &gt, &spec).unwrap();
        assert_eq!(zero[0].percent, 0.0);
        assert!(linear_distance_report(&gt, &gt, &MeasurementSpec::default()).is_err());
        let faces = vec![face_like(0.0)];
        assert_eq!(linear_distance_report(&faces, &faces, &MeasurementSpec::default()).unwrap().len(), 20);
    }

    #[test]
    fn angles() {
        let a = Point3::new(1.0, 0.0, 0.0);
        let o = Point3::origin();
        assert!((angle_deg(&a, &o, &Point3::new(0.0, 1.0, 0.0)).unwrap() - 90.0).abs() < 1e-12);
        assert_eq!(angle_deg(&a, &o, &Point3::new(-2.0, 0.0, 0.0)).unwrap(), 180.0);
        assert!(angle_deg(&a, &o, &o).is_none());
        let faces = vec![face_like(0.0), face_like(1.0)];
        let rows = angle_report(&faces, &faces, &MeasurementSpec::default()).unwrap();
        assert!(rows.iter().all(|r| r.error == 0.0));
        let spec = MeasurementSpec {
            distances: vec![],
            angles: vec![AngleDef {
                a: "A".into(),
                vertex: "B".into(),
                c: "C".into(),
                intra: None,
            }],
            regions: Default::default(),
        };
        let bad = vec![set(&["A", "B", "C"], &[[0.0; 3], [0.0; 3], [1.0, 0.0, 0.0]])];
        assert!(matches!(angle_report(&bad, &bad, &spec), Err(Error::DegenerateAngle(_))));
    }

    #[test]
    fn bland_altman_constant_shift() {
        let spec = MeasurementSpec::default();
        let gt = vec![face_like(0.0), face_like(3.0)];
        let zero = bland_altman(&gt, &gt, &spec).unwrap();
        assert!(zero.groups.iter().all(|g| g.pooled.mean_difference == 0.0 && g.pooled.upper == 0.0));
        let shifted: Vec<LandmarkSet> = gt
            .iter()
            .map(|g| g.with_coords(g.coords().iter().map(|p| p + Vector3::new(0.0, 0.0, 1.0)).collect()).unwrap())
            .collect();
        let ba = bland_altman(&shifted, &gt, &spec).unwrap();
        assert_eq!(ba.groups.len(), 3);
        for g in &ba.groups {
            assert!((g.per_axis[2].mean_difference - 1.0).abs() < 1e-12);
            assert!(g.per_axis[2].std < 1e-12);
            assert!(g.per_axis[0].mean_difference.abs() < 1e-12);
            let p = g.pooled;
            assert!(((p.upper - p.mean_difference) - (p.mean_difference - p.lower)).abs() < 1e-12);
        }
        assert_eq!(ba.scatter.len(), 2 * 50 * 3);
    }
}
