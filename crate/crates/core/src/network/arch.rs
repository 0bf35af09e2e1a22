use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which conv blocks contribute an attention descriptor to the hybrid
/// feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionBlocks {
    All,
    FinalOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub depth: usize,
    pub filters: Vec<usize>,
    pub pool_factors: Vec<usize>,
    pub attention: bool,
    pub attention_blocks: AttentionBlocks,
    /// Restrict each attention softmax to the `k` highest-scoring points.
    pub top_k: Option<usize>,
    /// Widths of the MLP head; the last must be 3.
    pub mlp: Vec<usize>,
    pub dropout: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            filters: vec![32, 64, 128],
            pool_factors: vec![5, 5, 4],
            attention: true,
            attention_blocks: AttentionBlocks::All,
            top_k: None,
            mlp: vec![1024, 1024, 3],
            dropout: 0.3,
        }
    }
}

impl ArchConfig {
    /// Two blocks, `[32, 64]` filters pooled by `[5, 5]`.
    pub fn reduced_depth() -> Self {
        Self {
            depth: 2,
            filters: vec![32, 64],
            pool_factors: vec![5, 5],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::config("arch.depth", "must be >= 1"));
        }
        if self.filters.len() != self.depth || self.pool_factors.len() != self.depth {
            return Err(Error::config(
                "arch.filters",
                format!(
                    "filters ({}) and pool_factors ({}) must both have depth ({}) entries",
                    self.filters.len(),
                    self.pool_factors.len(),
                    self.depth
                ),
            ));
        }
        if self.filters.contains(&0) || self.pool_factors.contains(&0) {
            return Err(Error::config("arch.filters", "filter counts and pool factors must be >= 1"));
        }
        if self.mlp.last() != Some(&3) || self.mlp.contains(&0) {
            return Err(Error::config("arch.mlp", "non-empty, positive widths ending in 3"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("arch.dropout", "must be in [0, 1)"));
        }
        if self.top_k == Some(0) {
            return Err(Error::config("arch.top_k", "must be >= 1"));
        }
        Ok(())
    }

    pub fn pool_product(&self) -> usize {
        self.pool_factors.iter().product()
    }

    /// Checks that a patch size survives the pooling chain.
    pub fn check_points(&self, k: usize) -> Result<()> {
        if k == 0 || k % self.pool_product() != 0 {
            return Err(Error::Shape(format!(
                "patch size {k} not divisible by pooling product {}",
                self.pool_product()
            )));
        }
        Ok(())
    }

    /// Point-axis length after each block for a patch of `k` points.
    pub fn point_lengths(&self, k: usize) -> Vec<usize> {
        let mut len = k;
        self.pool_factors
            .iter()
            .map(|&f| {
                len /= f;
                len
            })
            .collect()
    }

    pub fn block_has_attention(&self, block: usize) -> bool {
        self.attention
            && match self.attention_blocks {
                AttentionBlocks::All => true,
                AttentionBlocks::FinalOnly => block + 1 == self.depth,
            }
    }

    /// Width `h` of the hybrid per-landmark feature.
    pub fn hybrid_width(&self, k: usize) -> usize {
        let last = *self.point_lengths(k).last().unwrap_or(&k);
        let local = last * self.filters.last().copied().unwrap_or(3);
        let global: usize = (0..self.depth)
            .filter(|&b| self.block_has_attention(b))
            .map(|b| self.filters[b])
            .sum();
        local + global
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_widths() {
        let a = ArchConfig::default();
        a.validate().unwrap();
        assert_eq!(a.point_lengths(1000), vec![200, 40, 10]);
        assert_eq!(a.hybrid_width(1000), 1504);
        let no_att = ArchConfig { attention: false, ..a.clone() };
        assert_eq!(no_att.hybrid_width(1000), 1280);
        let final_only = ArchConfig { attention_blocks: AttentionBlocks::FinalOnly, ..a };
        assert_eq!(final_only.hybrid_width(1000), 1408);
    }

    #[test]
    fn reduced_depth_lengths() {
        let a = ArchConfig::reduced_depth();
        a.validate().unwrap();
        assert_eq!(a.point_lengths(1000), vec![200, 40]);
    }

    #[test]
    fn invalid_configs() {
        let bad = ArchConfig { mlp: vec![8, 2], ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ArchConfig { filters: vec![32, 64], ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(ArchConfig::default().check_points(1010).is_err());
    }
}
