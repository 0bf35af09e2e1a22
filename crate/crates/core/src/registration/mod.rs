//! Multi-stage rigid alignment: FPFH descriptors, RANSAC coarse
//! registration, point-to-point ICP and transform composition.

mod align;
mod config;
mod fpfh;
mod icp;
mod kabsch;
mod ransac;

pub use align::{align_subject, Alignment, PreparedReference};
pub use config::RegistrationConfig;
pub use fpfh::{compute_fpfh, FpfhFeature, FPFH_BINS};
pub use icp::{icp, IcpResult};
pub use kabsch::kabsch;
pub use ransac::{ransac_global, RansacResult};

use crate::geometry::RigidTransform;

/// `T_final = fine · coarse`, re-orthonormalised if floating-point drift
/// exceeds 1e-9.
pub fn compose(fine: &RigidTransform, coarse: &RigidTransform) -> RigidTransform {
    fine.compose(coarse)
}
