use serde::{Deserialize, Serialize};

use super::PipelineConfig;
use crate::error::{Error, Result};
use crate::patching::{PatchSource, PatchStrategy};

/// Ablation variants, in report order.
pub const VARIANTS: [&str; 11] = [
    "baseline",
    "knn_500",
    "knn_1500",
    "radius_10",
    "radius_15",
    "radius_20",
    "coarse_k100",
    "no_ordering",
    "no_attention",
    "topk_10",
    "reduced_depth",
];

pub fn describe(variant: &str) -> &'static str {
    match variant {
        "baseline" => "configuration as given",
        "knn_500" => "K = 500 nearest vertices",
        "knn_1500" => "K = 1500 nearest vertices",
        "radius_10" => "radius D = 10 mm resampled to K = 1000",
        "radius_15" => "radius D = 15 mm resampled to K = 1000",
        "radius_20" => "radius D = 20 mm resampled to K = 1000",
        "coarse_k100" => "K = 100 from a 10,000-point surface resampling",
        "no_ordering" => "patch points shuffled instead of distance-ordered",
        "no_attention" => "attention descriptors removed from the hybrid feature",
        "topk_10" => "attention restricted to the 10 highest-scoring points",
        "reduced_depth" => "two conv blocks [32, 64] pooled by [5, 5]",
        _ => "unknown",
    }
}

/// The baseline configuration modified for `variant`.
pub fn apply_variant(base: &PipelineConfig, variant: &str) -> Result<PipelineConfig> {
    let mut c = base.clone();
    match variant {
        "baseline" => {}
        "knn_500" | "knn_1500" => {
            let k = if variant == "knn_500" { 500 } else { 1500 };
            c.patch.strategy = PatchStrategy::Knn { k };
            c.patch.source = PatchSource::Vertices;
        }
        "radius_10" | "radius_15" | "radius_20" => {
            let radius: f64 = variant["radius_".len()..].parse().expect("numeric suffix");
            c.patch.strategy = PatchStrategy::Radius { radius, k: 1000 };
            c.patch.source = PatchSource::Vertices;
        }
        "coarse_k100" => {
            c.patch.strategy = PatchStrategy::Knn { k: 100 };
            c.patch.source = PatchSource::Resampled { points: 10_000 };
        }
        "no_ordering" => c.patch.ordered = false,
        "no_attention" => c.arch.attention = false,
        "topk_10" => c.arch.top_k = Some(10),
        "reduced_depth" => {
            c.arch.depth = 2;
            c.arch.filters = vec![32, 64];
            c.arch.pool_factors = vec![5, 5];
        }
        other => {
            return Err(Error::config("ablation.variants", format!("unknown variant `{other}`")));
        }
    }
    Ok(c)
}

/// One row of the ablation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub description: String,
    pub folds: usize,
    /// Mean over folds of the best validation loss.
    pub val_loss: f64,
    pub pointwise_mean: f64,
    pub pointwise_std: f64,
    pub distance_mean: f64,
}

pub fn ablation_csv(rows: &[AblationRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format("ablation csv", e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::format("ablation csv", e.to_string()))
}
