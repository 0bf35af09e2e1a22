//! Shared fixtures for the criterion benchmarks under `benches/`.

use patchmark_core::geometry::{sample_surface, PointCloud};
use patchmark_core::synthetic::{generate_subject, FaceGenParams, SyntheticSubject};

/// A synthetic subject and an `n`-point surface sample of it.
pub fn subject(n: usize) -> (SyntheticSubject, PointCloud) {
    let params = FaceGenParams::default();
    let s = generate_subject(&params, 0).expect("default parameters are valid");
    let cloud = sample_surface(&s.mesh, n, 1).expect("mesh has area");
    (s, cloud)
}
