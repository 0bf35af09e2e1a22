//! Parametric face-like meshes with exactly known landmarks.

mod dataset;
mod face;

pub use dataset::{generate_dataset, sha256_file, DatasetManifest, FileChecksum, SubjectEntry, MANIFEST_FILE};
pub use face::{canonical_face, generate_subject, FaceGenParams, FaceShape, FeatureAmplitudes, SyntheticSubject, SHAPE_COEFFICIENTS};
