use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{Agreement, BlandAltman, BlandAltmanGroup, DistanceMatrix, LandmarkError, PointwiseErrors, Stat};
use super::{angle_report, bland_altman, distance_error_matrix, linear_distance_report, pointwise_errors, AngleRow, LinearRow, MeasurementSpec};
use crate::atlas::LandmarkSet;
use crate::error::{Error, Result};

/// Every evaluation metric for one set of predictions (or an aggregate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub subjects: usize,
    /// Number of fold reports merged into this one (1 for a single fold).
    pub folds: usize,
    pub landmarks: Vec<String>,
    pub pointwise: PointwiseErrors,
    pub distance_matrix: DistanceMatrix,
    pub linear: Vec<LinearRow>,
    pub angles: Vec<AngleRow>,
    pub bland_altman: BlandAltman,
}

/// Computes the full report. Every measurement in `spec` must resolve.
pub fn evaluate(pred: &[LandmarkSet], gt: &[LandmarkSet], spec: &MeasurementSpec) -> Result<EvalReport> {
    let pointwise = pointwise_errors(pred, gt, spec)?;
    Ok(EvalReport {
        subjects: pred.len(),
        folds: 1,
        landmarks: gt[0].names().to_vec(),
        distance_matrix: distance_error_matrix(pred, gt)?,
        linear: linear_distance_report(pred, gt, spec)?,
        angles: angle_report(pred, gt, spec)?,
        bland_altman: bland_altman(pred, gt, spec)?,
        pointwise,
    })
}

/// Recomputes the report without the named landmarks. Measurements that
/// reference a dropped landmark are omitted.
pub fn exclude_landmarks(
    pred: &[LandmarkSet],
    gt: &[LandmarkSet],
    drop: &[String],
    spec: &MeasurementSpec,
) -> Result<EvalReport> {
    let first = gt.first().ok_or_else(|| Error::Schema("no subjects to evaluate".into()))?;
    for name in drop {
        first.index_of(name)?;
    }
    if first.names().iter().all(|n| drop.contains(n)) {
        return Err(Error::Schema("cannot exclude every landmark".into()));
    }
    let pred: Vec<LandmarkSet> = pred.iter().map(|p| p.without(drop)).collect::<Result<_>>()?;
    let gt: Vec<LandmarkSet> = gt.iter().map(|g| g.without(drop)).collect::<Result<_>>()?;
    evaluate(&pred, &gt, &spec.restricted_to(gt[0].names()))
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

fn mean_agreement(items: &[Agreement]) -> Agreement {
    Agreement {
        count: items.iter().map(|a| a.count).sum(),
        mean_difference: mean_of(items.iter().map(|a| a.mean_difference)),
        std: mean_of(items.iter().map(|a| a.std)),
        lower: mean_of(items.iter().map(|a| a.lower)),
        upper: mean_of(items.iter().map(|a| a.upper)),
    }
}

/// Merges per-fold reports: means are averaged and reported standard
/// deviations are the mean of the fold standard deviations.
pub fn aggregate_folds(reports: &[EvalReport]) -> Result<EvalReport> {
    let first = reports.first().ok_or_else(|| Error::Schema("no fold reports to aggregate".into()))?;
    for r in &reports[1..] {
        let same_rows = r.linear.len() == first.linear.len()
            && r.angles.len() == first.angles.len()
            && r.linear.iter().zip(&first.linear).all(|(a, b)| a.a == b.a && a.b == b.b)
            && r.angles.iter().zip(&first.angles).all(|(a, b)| (&a.a, &a.vertex, &a.c) == (&b.a, &b.vertex, &b.c))
            && r.bland_altman.groups.iter().map(|g| g.region).eq(first.bland_altman.groups.iter().map(|g| g.region));
        if r.landmarks != first.landmarks || !same_rows {
            return Err(Error::Schema("fold reports cover different landmarks or measurements".into()));
        }
    }
    let n = first.landmarks.len();
    let per_landmark: Vec<LandmarkError> = (0..n)
        .map(|k| LandmarkError {
            name: first.landmarks[k].clone(),
            region: first.pointwise.per_landmark[k].region,
            mean: mean_of(reports.iter().map(|r| r.pointwise.per_landmark[k].mean)),
            std: mean_of(reports.iter().map(|r| r.pointwise.per_landmark[k].std)),
        })
        .collect();
    let overall = Stat {
        mean: mean_of(per_landmark.iter().map(|l| l.mean)),
        std: mean_of(per_landmark.iter().map(|l| l.std)),
    };
    let pooled = Stat {
        mean: mean_of(reports.iter().map(|r| r.pointwise.pooled.mean)),
        std: mean_of(reports.iter().map(|r| r.pointwise.pooled.std)),
    };
    let values: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| mean_of(reports.iter().map(|r| r.distance_matrix.values[i][j]))).collect())
        .collect();
    let linear = first
        .linear
        .iter()
        .enumerate()
        .map(|(i, row)| LinearRow {
            error: mean_of(reports.iter().map(|r| r.linear[i].error)),
            reference: mean_of(reports.iter().map(|r| r.linear[i].reference)),
            percent: mean_of(reports.iter().map(|r| r.linear[i].percent)),
            ..row.clone()
        })
        .collect();
    let angles = first
        .angles
        .iter()
        .enumerate()
        .map(|(i, row)| AngleRow {
            error: mean_of(reports.iter().map(|r| r.angles[i].error)),
            reference: mean_of(reports.iter().map(|r| r.angles[i].reference)),
            percent: mean_of(reports.iter().map(|r| r.angles[i].percent)),
            ..row.clone()
        })
        .collect();
    let groups = first
        .bland_altman
        .groups
        .iter()
        .enumerate()
        .map(|(gi, g)| {
            let pick = |f: &dyn Fn(&BlandAltmanGroup) -> Agreement| -> Agreement {
                mean_agreement(&reports.iter().map(|r| f(&r.bland_altman.groups[gi])).collect::<Vec<_>>())
            };
            BlandAltmanGroup {
                region: g.region,
                pooled: pick(&|x| x.pooled),
                per_axis: [pick(&|x| x.per_axis[0]), pick(&|x| x.per_axis[1]), pick(&|x| x.per_axis[2])],
            }
        })
        .collect();
    Ok(EvalReport {
        subjects: reports.iter().map(|r| r.subjects).sum(),
        folds: reports.iter().map(|r| r.folds).sum(),
        landmarks: first.landmarks.clone(),
        pointwise: PointwiseErrors {
            per_landmark,
            overall,
            pooled,
            errors: reports.iter().flat_map(|r| r.pointwise.errors.iter().cloned()).collect(),
        },
        distance_matrix: DistanceMatrix {
            names: first.landmarks.clone(),
            mean: mean_of(reports.iter().map(|r| r.distance_matrix.mean)),
            values,
        },
        linear,
        angles,
        bland_altman: BlandAltman {
            groups,
            scatter: reports.iter().flat_map(|r| r.bland_altman.scatter.iter().cloned()).collect(),
        },
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl EvalReport {
    pub fn pointwise_csv(&self) -> String {
        let mut s = String::from("landmark,region,mean_mm,std_mm\n");
        for l in &self.pointwise.per_landmark {
            let region = serde_json::to_value(l.region).expect("enum").as_str().unwrap_or_default().to_string();
            writeln!(s, "{},{},{},{}", l.name, region, l.mean, l.std).expect("string write");
        }
        writeln!(s, "overall,,{},{}", self.pointwise.overall.mean, self.pointwise.overall.std).expect("string write");
        s
    }

    pub fn matrix_csv(&self) -> String {
        let mut s = String::from("landmark");
        for n in &self.distance_matrix.names {
            write!(s, ",{n}").expect("string write");
        }
        s.push('\n');
        for (name, row) in self.distance_matrix.names.iter().zip(&self.distance_matrix.values) {
            s.push_str(name);
            for v in row {
                write!(s, ",{v}").expect("string write");
            }
            s.push('\n');
        }
        s
    }

    pub fn linear_csv(&self) -> String {
        let mut s = String::from("group,a,b,intra_mm,error_mm,reference_mm,error_percent\n");
        for r in &self.linear {
            writeln!(s, "{},{},{},{},{},{},{}", r.group, r.a, r.b, opt(r.intra), r.error, r.reference, r.percent)
                .expect("string write");
        }
        s
    }

    pub fn angles_csv(&self) -> String {
        let mut s = String::from("a,vertex,c,intra_deg,error_deg,reference_deg,error_percent\n");
        for r in &self.angles {
            writeln!(s, "{},{},{},{},{},{},{}", r.a, r.vertex, r.c, opt(r.intra), r.error, r.reference, r.percent)
                .expect("string write");
        }
        s
    }

    pub fn bland_altman_csv(&self) -> String {
        let mut s = String::from("region,axis,count,mean_difference,std,lower,upper\n");
        for g in &self.bland_altman.groups {
            let region = serde_json::to_value(g.region).expect("enum").as_str().unwrap_or_default().to_string();
            let rows = [("all", g.pooled), ("x", g.per_axis[0]), ("y", g.per_axis[1]), ("z", g.per_axis[2])];
            for (axis, a) in rows {
                writeln!(s, "{region},{axis},{},{},{},{},{}", a.count, a.mean_difference, a.std, a.lower, a.upper)
                    .expect("string write");
            }
        }
        s
    }

    pub fn scatter_csv(&self) -> String {
        let mut s = String::from("region,subject,landmark,axis,mean,difference\n");
        for p in &self.bland_altman.scatter {
            let region = serde_json::to_value(p.region).expect("enum").as_str().unwrap_or_default().to_string();
            writeln!(s, "{region},{},{},{},{},{}", p.subject, p.landmark, p.axis, p.mean, p.difference).expect("string write");
        }
        s
    }

    /// Writes the JSON report and one CSV per table into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("report.json", serde_json::to_string_pretty(self)?),
            ("pointwise.csv", self.pointwise_csv()),
            ("distance_matrix.csv", self.matrix_csv()),
            ("linear_distances.csv", self.linear_csv()),
            ("angles.csv", self.angles_csv()),
            ("bland_altman.csv", self.bland_altman_csv()),
            ("bland_altman_scatter.csv", self.scatter_csv()),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
