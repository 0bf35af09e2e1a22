use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::eval::Postprocess;
use crate::network::ArchConfig;
use crate::patching::PatchConfig;
use crate::registration::RegistrationConfig;
use crate::rng::derive_seed;
use crate::synthetic::FaceGenParams;
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Dataset directory holding a dataset manifest; defaults to
    /// `<output_dir>/dataset`.
    pub dir: Option<PathBuf>,
    /// Subjects written by `generate`.
    pub subjects: usize,
    pub generator: FaceGenParams,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            dir: None,
            subjects: 60,
            generator: FaceGenParams::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub postprocess: Postprocess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub exclude_landmarks: Vec<String>,
    /// Measurement definitions (JSON); the built-in facial set when absent.
    pub measurements: Option<PathBuf>,
    /// Also render the distance matrix and Bland-Altman plots as SVG.
    pub svg: bool,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            exclude_landmarks: Vec::new(),
            measurements: None,
            svg: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    /// Variant names to run; see [`super::ablation::VARIANTS`].
    pub variants: Vec<String>,
    /// Train only the first `max_folds` folds of every variant.
    pub max_folds: Option<usize>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            variants: super::ablation::VARIANTS.iter().map(|v| v.to_string()).collect(),
            max_folds: None,
        }
    }
}

/// Everything a pipeline run needs, loaded from one JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    /// Master seed mixed into every component seed. Required.
    pub seed: Option<u64>,
    pub dataset: DatasetConfig,
    pub registration: RegistrationConfig,
    pub patch: PatchConfig,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub predict: PredictConfig,
    pub evaluate: EvaluateConfig,
    pub ablation: AblationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("patchmark-run"),
            seed: None,
            dataset: DatasetConfig::default(),
            registration: RegistrationConfig::default(),
            patch: PatchConfig::default(),
            arch: ArchConfig::default(),
            train: TrainConfig::default(),
            predict: PredictConfig::default(),
            evaluate: EvaluateConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

/// Component seeds after mixing in the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub generator: u64,
    pub registration: u64,
    pub patch: u64,
    pub train: u64,
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Applies a `dotted.key=value` override. The value is read as JSON when
    /// it parses, otherwise as a string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment, "override must look like key=value"))?;
        let key = key.trim();
        let mut doc = serde_json::to_value(&*self)?;
        let mut slot = &mut doc;
        for part in key.split('.') {
            slot = match slot {
                Value::Object(map) => map
                    .get_mut(part)
                    .ok_or_else(|| Error::config(key, format!("unknown field `{part}`")))?,
                Value::Array(items) => {
                    let i: usize = part
                        .parse()
                        .map_err(|_| Error::config(key, format!("`{part}` is not an array index")))?;
                    let len = items.len();
                    items
                        .get_mut(i)
                        .ok_or_else(|| Error::config(key, format!("index {i} out of range for {len} items")))?
                }
                _ => return Err(Error::config(key, format!("cannot descend into `{part}`"))),
            };
        }
        *slot = parse_value(raw.trim());
        *self = serde_json::from_value(doc).map_err(|e| Error::config(key, e.to_string()))?;
        Ok(())
    }

    pub fn seeds(&self) -> Result<Seeds> {
        let master = self.seed.ok_or_else(|| Error::config("seed", "a master seed is required"))?;
        Ok(Seeds {
            master,
            generator: derive_seed(master, &[1, self.dataset.generator.seed]),
            registration: derive_seed(master, &[2, self.registration.seed]),
            patch: derive_seed(master, &[3, self.patch.seed]),
            train: derive_seed(master, &[4, self.train.seed]),
        })
    }

    /// Copy with every component seed replaced by its mixed value.
    pub fn resolved(&self) -> Result<Self> {
        let seeds = self.seeds()?;
        let mut out = self.clone();
        out.dataset.generator.seed = seeds.generator;
        out.registration.seed = seeds.registration;
        out.patch.seed = seeds.patch;
        out.train.seed = seeds.train;
        Ok(out)
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.dataset.dir.clone().unwrap_or_else(|| self.output_dir.join("dataset"))
    }

    pub fn validate(&self) -> Result<()> {
        self.seeds()?;
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::config("output_dir", "must not be empty"));
        }
        if self.dataset.subjects == 0 {
            return Err(Error::config("dataset.subjects", "must be >= 1"));
        }
        self.dataset.generator.validate()?;
        self.registration.validate()?;
        self.patch.validate()?;
        self.arch.validate()?;
        self.arch.check_points(self.patch.strategy.points())?;
        self.train.validate()?;
        if let Some(path) = &self.evaluate.measurements {
            if !path.is_file() {
                return Err(Error::config(
                    "evaluate.measurements",
                    format!("{} does not exist", path.display()),
                ));
            }
        }
        if self.ablation.max_folds == Some(0) {
            return Err(Error::config("ablation.max_folds", "must be >= 1"));
        }
        for v in &self.ablation.variants {
            if !super::ablation::VARIANTS.contains(&v.as_str()) {
                return Err(Error::config(
                    "ablation.variants",
                    format!("unknown variant `{v}`; known: {}", super::ablation::VARIANTS.join(", ")),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_overrides() {
        let mut c = PipelineConfig::default();
        c.apply_override("train.alpha=0.5").unwrap();
        c.apply_override("patch.strategy.k=100").unwrap();
        c.apply_override("arch.top_k=10").unwrap();
        c.apply_override("arch.filters.1=48").unwrap();
        c.apply_override("predict.postprocess=centroid:10").unwrap();
        c.apply_override("output_dir=/tmp/x").unwrap();
        assert_eq!(c.train.alpha, 0.5);
        assert_eq!(c.patch.strategy.points(), 100);
        assert_eq!(c.arch.top_k, Some(10));
        assert_eq!(c.arch.filters, vec![32, 48, 128]);
        assert_eq!(c.predict.postprocess, Postprocess::Centroid { k: 10 });
        assert_eq!(c.output_dir, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn bad_overrides_name_the_key() {
        let mut c = PipelineConfig::default();
        for bad in ["train.nope=1", "train.alpha=\"x\"", "noequals", "arch.filters.9=1"] {
            match c.apply_override(bad) {
                Err(Error::Config { field, .. }) => assert!(bad.starts_with(&field) || field == bad, "{field}"),
                other => panic!("{bad}: {other:?}"),
            }
        }
        assert_eq!(c, PipelineConfig::default());
    }

    #[test]
    fn seed_is_mandatory() {
        let mut c = PipelineConfig::default();
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "seed"));
        c.seed = Some(3);
        c.validate().unwrap();
        let r = c.resolved().unwrap();
        assert_ne!(r.train.seed, c.train.seed);
        assert_eq!(r, c.resolved().unwrap());
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let c = PipelineConfig {
            seed: Some(1),
            ..PipelineConfig::default()
        };
        let back: PipelineConfig = serde_json::from_str(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sed": 1}"#).is_err());
    }
}
