//! Surface re-projection of predictions and the evaluation metric suite.

mod measure;
mod metrics;
mod project;
mod report;
pub mod svg;

pub use measure::{AngleDef, DistanceDef, MeasurementSpec};
pub use metrics::{
    angle_deg, angle_report, bland_altman, distance_error_matrix, linear_distance_report, pointwise_errors, Agreement,
    AngleRow, BlandAltman, BlandAltmanGroup, BlandAltmanPoint, DistanceMatrix, LandmarkError, LinearRow, PointwiseErrors,
    Stat,
};
pub use project::{project_centroid, project_nearest, Postprocess};
pub use report::{aggregate_folds, evaluate, exclude_landmarks, EvalReport};
