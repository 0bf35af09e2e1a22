use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::atlas::LandmarkSet;
use crate::error::{Error, Result};
use crate::geometry::{KdTree, Point3, PointCloud};

/// Surface re-projection applied to raw network output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Postprocess {
    /// Keep raw regressed coordinates.
    Raw,
    Nearest,
    Centroid { k: usize },
}

impl Default for Postprocess {
    fn default() -> Self {
        Postprocess::Nearest
    }
}

impl fmt::Display for Postprocess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Postprocess::Raw => write!(f, "raw"),
            Postprocess::Nearest => write!(f, "nearest"),
            Postprocess::Centroid { k } => write!(f, "centroid:{k}"),
        }
    }
}

impl FromStr for Postprocess {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Postprocess::Raw),
            "nearest" => Ok(Postprocess::Nearest),
            _ => {
                let k = s
                    .strip_prefix("centroid:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| Error::config("postprocess", format!("expected raw, nearest or centroid:K, got `{s}`")))?;
                Ok(Postprocess::Centroid { k })
            }
        }
    }
}

impl TryFrom<String> for Postprocess {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Postprocess> for String {
    fn from(p: Postprocess) -> String {
        p.to_string()
    }
}

impl Postprocess {
    pub fn apply(&self, pred: &LandmarkSet, cloud: &PointCloud) -> Result<LandmarkSet> {
        match *self {
            Postprocess::Raw => Ok(pred.clone()),
            Postprocess::Nearest => Ok(project_nearest(pred, cloud)),
            Postprocess::Centroid { k } => project_centroid(pred, cloud, k),
        }
    }
}

/// Snaps each landmark to its nearest cloud point.
pub fn project_nearest(pred: &LandmarkSet, cloud: &PointCloud) -> LandmarkSet {
    crate::atlas::project_to_surface(pred, cloud)
}

/// Replaces each landmark with the mean of its `k` nearest cloud points.
pub fn project_centroid(pred: &LandmarkSet, cloud: &PointCloud, k: usize) -> Result<LandmarkSet> {
    if k == 0 {
        return Err(Error::config("postprocess", "centroid K must be >= 1"));
    }
    let tree = KdTree::build(cloud.points());
    let coords = pred
        .coords()
        .iter()
        .map(|p| {
            let nn = tree.knn(cloud.points(), p, k)?;
            let sum = nn.iter().fold(Vector3::zeros(), |a, n| a + n.point.coords);
            Ok(Point3::from(sum / k as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    pred.with_coords(coords)
}
