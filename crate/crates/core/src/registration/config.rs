use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Orientation;

/// Parameters for every registration stage. Distances in millimetres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    /// Points drawn from the subject surface for the coarse stage.
    pub sample_count: usize,
    /// Voxel edge used to thin clouds before descriptor matching; `None`
    /// keeps every sampled point.
    pub voxel_size: Option<f64>,
    pub normal_k: usize,
    pub normal_orientation: Orientation,
    /// Explicit FPFH radius; when absent it is `fpfh_radius_factor` times
    /// the mean nearest-neighbour spacing.
    pub fpfh_radius: Option<f64>,
    pub fpfh_radius_factor: f64,
    pub ransac_max_iterations: usize,
    pub ransac_inlier_threshold: f64,
    pub ransac_min_inlier_fraction: f64,
    /// Minimum ratio between corresponding edge lengths of a 3-point sample.
    pub ransac_edge_ratio: f64,
    pub icp_max_iterations: usize,
    pub icp_tolerance: f64,
    pub icp_max_correspondence: f64,
    pub seed: u64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            sample_count: 10_000,
            voxel_size: Some(4.0),
            normal_k: 30,
            normal_orientation: Orientation::default(),
            fpfh_radius: None,
            fpfh_radius_factor: 5.0,
            ransac_max_iterations: 100_000,
            ransac_inlier_threshold: 5.0,
            ransac_min_inlier_fraction: 0.1,
            ransac_edge_ratio: 0.9,
            icp_max_iterations: 50,
            icp_tolerance: 1e-4,
            icp_max_correspondence: 10.0,
            seed: 0,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("registration.fpfh_radius_factor", self.fpfh_radius_factor),
            ("registration.ransac_inlier_threshold", self.ransac_inlier_threshold),
            ("registration.ransac_min_inlier_fraction", self.ransac_min_inlier_fraction),
            ("registration.icp_tolerance", self.icp_tolerance),
            ("registration.icp_max_correspondence", self.icp_max_correspondence),
        ];
        for (field, v) in positive {
            if !(v > 0.0) {
                return Err(Error::config(field, "must be > 0"));
            }
        }
        if let Some(r) = self.fpfh_radius {
            if !(r > 0.0) {
                return Err(Error::config("registration.fpfh_radius", "must be > 0"));
            }
        }
        if let Some(v) = self.voxel_size {
            if !(v > 0.0) {
                return Err(Error::config("registration.voxel_size", "must be > 0"));
            }
        }
        if !(self.ransac_edge_ratio > 0.0 && self.ransac_edge_ratio <= 1.0) {
            return Err(Error::config("registration.ransac_edge_ratio", "must be in (0, 1]"));
        }
        let counts = [
            ("registration.sample_count", self.sample_count),
            ("registration.ransac_max_iterations", self.ransac_max_iterations),
            ("registration.icp_max_iterations", self.icp_max_iterations),
        ];
        for (field, v) in counts {
            if v < 1 {
                return Err(Error::config(field, "must be >= 1"));
            }
        }
        if self.normal_k < 3 {
            return Err(Error::config("registration.normal_k", "must be >= 3"));
        }
        Ok(())
    }
}
