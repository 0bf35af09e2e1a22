//! Stage runner: configuration, on-disk artifacts and run manifests.

pub mod ablation;
pub mod artifacts;
pub mod config;
pub mod manifest;
pub mod stages;

pub use ablation::{apply_variant, AblationRow, VARIANTS};
pub use artifacts::{AlignmentRecord, LandmarkTable, SubjectCoords};
pub use config::{AblationConfig, DatasetConfig, EvaluateConfig, PipelineConfig, PredictConfig, Seeds};
pub use manifest::{RunManifest, RUN_MANIFEST};
pub use stages::{Pipeline, RunOptions, StageReport, StageStatus};
