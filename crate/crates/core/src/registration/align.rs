use log::debug;

use super::{compute_fpfh, icp, ransac_global, FpfhFeature, RegistrationConfig};
use crate::error::{Error, Result};
use crate::geometry::{crop_roi, estimate_normals, sample_surface, BoundingBox, Mesh, PointCloud, RigidTransform};

/// Reference model with its registration-stage products computed once.
#[derive(Debug, Clone)]
pub struct PreparedReference {
    pub cloud: PointCloud,
    pub roi: BoundingBox,
    matching_cloud: PointCloud,
    features: Vec<FpfhFeature>,
    roi_cloud: PointCloud,
}

/// Outcome of [`align_subject`].
#[derive(Debug, Clone)]
pub struct Alignment {
    /// The full-resolution subject mesh moved by `transform`.
    pub mesh: Mesh,
    /// `T_final = T_icp · T_coarse`.
    pub transform: RigidTransform,
    pub coarse: RigidTransform,
    pub fine: RigidTransform,
    pub ransac_inlier_fraction: f64,
    pub icp_rms: f64,
}

fn stage(stage: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Registration { .. } => e,
        other => Error::Registration {
            stage,
            reason: other.to_string(),
        },
    }
}

/// Downsampled cloud, normals and FPFH descriptors used for matching.
fn describe(cloud: &PointCloud, cfg: &RegistrationConfig) -> Result<(PointCloud, Vec<FpfhFeature>)> {
    let thinned = match cfg.voxel_size {
        Some(v) => cloud.voxel_downsample(v).map_err(stage("fpfh"))?,
        None => cloud.clone(),
    };
    let k = cfg.normal_k.min(thinned.len());
    let est = estimate_normals(&thinned, k, cfg.normal_orientation).map_err(stage("normals"))?;
    let radius = match cfg.fpfh_radius {
        Some(r) => r,
        None => cfg.fpfh_radius_factor * thinned.mean_spacing(),
    };
    let features = compute_fpfh(&est.cloud, &est.valid, radius).map_err(stage("fpfh"))?;
    Ok((thinned, features))
}

impl PreparedReference {
    pub fn new(cloud: PointCloud, roi: BoundingBox, cfg: &RegistrationConfig) -> Result<Self> {
        cfg.validate()?;
        let (matching_cloud, features) = describe(&cloud, cfg)?;
        let roi_cloud = crop_roi(&cloud, &roi).map_err(stage("crop"))?;
        Ok(Self {
            cloud,
            roi,
            matching_cloud,
            features,
            roi_cloud,
        })
    }

    /// Runs the full coarse-to-fine chain for one subject mesh.
    pub fn align(&self, subject: &Mesh, cfg: &RegistrationConfig) -> Result<Alignment> {
        let low = sample_surface(subject, cfg.sample_count, cfg.seed).map_err(stage("sample"))?;
        let (matching, features) = describe(&low, cfg)?;
        let coarse = ransac_global(&matching, &self.matching_cloud, &features, &self.features, cfg)?;
        debug!(
            "ransac: {} / {} inliers",
            coarse.inliers, coarse.correspondences
        );
        // The ROI crop is only used to drive ICP; the returned mesh keeps
        // every vertex.
        let coarse_mesh = subject.apply_transform(&coarse.transform);
        // The reference crop drives the correspondences and the subject-side
        // fine alignment is the inverse. The subject crop is padded so that
        // its edges, which follow the coarse pose, cannot anchor reference
        // points near the ROI boundary.
        let padded = self.roi.expanded(cfg.icp_max_correspondence);
        let roi = crop_roi(&coarse_mesh.to_cloud().map_err(stage("crop"))?, &padded).map_err(stage("crop"))?;
        let fine = icp(&self.roi_cloud, &roi, &RigidTransform::identity(), cfg)?;
        let fine_transform = fine.transform.inverse();
        let transform = super::compose(&fine_transform, &coarse.transform);
        Ok(Alignment {
            mesh: subject.apply_transform(&transform),
            transform,
            coarse: coarse.transform,
            fine: fine_transform,
            ransac_inlier_fraction: coarse.inlier_fraction,
            icp_rms: fine.final_rms(),
        })
    }
}

/// Aligns `subject` to `reference`: surface sampling, FPFH + RANSAC, ROI
/// crop, ICP and composition. The returned mesh is the uncropped original
/// moved by `T_final`.
pub fn align_subject(
    subject: &Mesh,
    reference: &PointCloud,
    roi: &BoundingBox,
    cfg: &RegistrationConfig,
) -> Result<Alignment> {
    PreparedReference::new(reference.clone(), *roi, cfg)?.align(subject, cfg)
}
