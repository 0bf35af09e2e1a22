use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;
use ndarray::Array3;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::ablation::{ablation_csv, apply_variant, describe, AblationRow};
use super::artifacts::{read_json, write_json, AlignmentRecord, LandmarkTable};
use super::manifest::{checksum, collect_outputs, fingerprint, require_stage, RunManifest, RUN_MANIFEST};
use super::{PipelineConfig, Seeds};
use crate::atlas::{mean_template, project_to_surface, LandmarkSet};
use crate::error::{Error, Result};
use crate::eval::{aggregate_folds, evaluate, exclude_landmarks, svg, EvalReport, MeasurementSpec};
use crate::geometry::{load_mesh, sample_surface, Mesh, Point3, PointCloud, RigidTransform};
use crate::network::{load_checkpoint, predict, save_checkpoint};
use crate::patching::{build_patch_tensor, PatchSource, PatchSubject, PatchTensor};
use crate::registration::PreparedReference;
use crate::rng::derive_seed;
use crate::synthetic::{generate_dataset, DatasetManifest, FileChecksum, MANIFEST_FILE};
use crate::training::{kfold_split, train, Fold};

/// Execution options that do not change results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads for per-subject and per-fold parallelism.
    pub jobs: usize,
    /// Rerun stages even when their inputs are unchanged.
    pub force: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { jobs: 1, force: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Completed,
    /// Inputs unchanged since the last run; nothing was done.
    UpToDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub stage: &'static str,
    pub dir: PathBuf,
    pub status: StageStatus,
    pub summary: BTreeMap<String, Value>,
}

/// A configured pipeline rooted at `output_dir`.
pub struct Pipeline {
    cfg: PipelineConfig,
    seeds: Seeds,
    opts: RunOptions,
    pool: rayon::ThreadPool,
    /// Where registration results live; a shared directory for ablation
    /// variants, otherwise this pipeline's own preprocess directory.
    alignment_dir: Option<PathBuf>,
    max_folds: Option<usize>,
}

type Summary = BTreeMap<String, Value>;

fn subject_name(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.csv"))
}

fn fold_dir(dir: &Path, f: usize) -> PathBuf {
    dir.join(format!("fold_{f}"))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Empties `dir` if it holds a previous run (or nothing); refuses to touch
/// directories this tool did not create.
fn reset_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        let empty = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_none();
        if !empty && !dir.join(RUN_MANIFEST).is_file() {
            return Err(Error::config(
                "output_dir",
                format!("{} exists and was not written by a pipeline stage", dir.display()),
            ));
        }
        std::fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    create_dir(dir)
}

impl Pipeline {
    pub fn new(cfg: &PipelineConfig, opts: RunOptions) -> Result<Self> {
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs.max(1))
            .build()
            .map_err(|e| Error::config("jobs", e.to_string()))?;
        Ok(Self {
            seeds: cfg.seeds()?,
            cfg: cfg.resolved()?,
            opts,
            pool,
            alignment_dir: None,
            max_folds: None,
        })
    }

    /// The configuration with component seeds resolved.
    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.cfg.output_dir.join(stage)
    }

    fn dataset_dir(&self) -> PathBuf {
        self.cfg.dataset_dir()
    }

    fn alignment_dir(&self) -> PathBuf {
        self.alignment_dir.clone().unwrap_or_else(|| self.stage_dir("preprocess"))
    }

    /// Runs `body` in `dir` unless a manifest with the same fingerprint and
    /// intact outputs is already there.
    fn run_stage(
        &self,
        stage: &'static str,
        dir: &Path,
        section: Value,
        inputs: Vec<FileChecksum>,
        body: impl FnOnce(&Path) -> Result<Summary>,
    ) -> Result<StageReport> {
        let fp = fingerprint(stage, &json!({ "section": section, "seed": self.seeds.master }), &inputs)?;
        if !self.opts.force && RunManifest::is_current(dir, &fp) {
            info!("{stage}: up to date in {}", dir.display());
            let summary = RunManifest::load(dir)?.summary;
            return Ok(StageReport {
                stage,
                dir: dir.to_path_buf(),
                status: StageStatus::UpToDate,
                summary,
            });
        }
        info!("{stage}: running in {}", dir.display());
        reset_dir(dir)?;
        let summary = match body(dir) {
            Ok(s) => s,
            Err(e) => {
                let _ = std::fs::remove_dir_all(dir);
                return Err(e);
            }
        };
        let manifest = RunManifest {
            stage: stage.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            fingerprint: fp,
            seeds: self.seeds,
            config: serde_json::to_value(&self.cfg)?,
            inputs,
            outputs: collect_outputs(dir)?,
            summary: summary.clone(),
        };
        manifest.save(dir)?;
        Ok(StageReport {
            stage,
            dir: dir.to_path_buf(),
            status: StageStatus::Completed,
            summary,
        })
    }

    pub fn run(&self, subcommand: &str) -> Result<StageReport> {
        match subcommand {
            "generate" => self.generate(),
            "preprocess" => self.preprocess(),
            "train" => self.train(),
            "predict" => self.predict(),
            "evaluate" => self.evaluate(),
            "ablate" => self.ablate(),
            other => Err(Error::config(
                "subcommand",
                format!("unknown subcommand `{other}`; expected generate, preprocess, train, predict, evaluate or ablate"),
            )),
        }
    }

    /// `generate`, `preprocess`, `train`, `predict` and `evaluate` in order.
    pub fn run_all(&self) -> Result<Vec<StageReport>> {
        ["generate", "preprocess", "train", "predict", "evaluate"]
            .iter()
            .map(|s| self.run(s))
            .collect()
    }

    pub fn generate(&self) -> Result<StageReport> {
        let dir = self.dataset_dir();
        let section = json!({ "subjects": self.cfg.dataset.subjects, "generator": self.cfg.dataset.generator });
        let (params, n) = (self.cfg.dataset.generator.clone(), self.cfg.dataset.subjects);
        self.run_stage("generate", &dir, section, Vec::new(), |dir| {
            let manifest = generate_dataset(&params, n, dir)?;
            Ok(BTreeMap::from([("subjects".into(), json!(manifest.subjects.len()))]))
        })
    }

    fn load_dataset(&self) -> Result<(DatasetManifest, FileChecksum)> {
        let dir = self.dataset_dir();
        let path = dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(Error::MissingArtifact {
                path,
                required: "generate",
            });
        }
        let manifest = DatasetManifest::load(&dir)?;
        let bad = manifest.verify(&dir)?;
        if !bad.is_empty() {
            return Err(Error::format("dataset", format!("checksum mismatch for {}", bad.join(", "))));
        }
        Ok((manifest, checksum(&path, format!("dataset/{MANIFEST_FILE}"))?))
    }

    fn load_subject(&self, manifest: &DatasetManifest, i: usize) -> Result<(Mesh, LandmarkSet)> {
        let dir = self.dataset_dir();
        let s = &manifest.subjects[i];
        Ok((load_mesh(dir.join(&s.mesh))?, LandmarkSet::load(dir.join(&s.landmarks))?))
    }

    fn align_all(&self, manifest: &DatasetManifest, dir: &Path) -> Result<()> {
        let dataset = self.dataset_dir();
        let reference = load_mesh(dataset.join(&manifest.reference))?.to_cloud()?;
        let prepared = PreparedReference::new(reference, manifest.roi, &self.cfg.registration)?;
        let results: Vec<(AlignmentRecord, LandmarkSet)> = self.pool.install(|| {
            (0..manifest.subjects.len())
                .into_par_iter()
                .map(|i| {
                    let (mesh, landmarks) = self.load_subject(manifest, i)?;
                    let mut cfg = self.cfg.registration.clone();
                    cfg.seed = derive_seed(cfg.seed, &[i as u64]);
                    let a = prepared.align(&mesh, &cfg).map_err(|e| match e {
                        Error::Registration { stage, reason } => Error::Registration {
                            stage,
                            reason: format!("{}: {reason}", manifest.subjects[i].id),
                        },
                        other => other,
                    })?;
                    info!(
                        "aligned {} (ransac fitness {:.3}, icp rms {:.3} mm)",
                        manifest.subjects[i].id, a.ransac_inlier_fraction, a.icp_rms
                    );
                    let record = AlignmentRecord {
                        id: manifest.subjects[i].id.clone(),
                        transform: a.transform.to_rows(),
                        coarse: a.coarse.to_rows(),
                        fine: a.fine.to_rows(),
                        ransac_inlier_fraction: a.ransac_inlier_fraction,
                        icp_rms: a.icp_rms,
                    };
                    Ok((record, landmarks.apply_transform(&a.transform)))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let (records, aligned): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
        write_json(&dir.join("alignment.json"), &records)?;
        write_json(&dir.join("landmarks.json"), &LandmarkTable::from_sets(&ids, &aligned)?)?;
        let folds = kfold_split(&(0..ids.len()).collect::<Vec<_>>(), self.cfg.train.folds, self.cfg.train.seed)?;
        write_json(&dir.join("folds.json"), &folds)
    }

    fn aligned_mesh(&self, manifest: &DatasetManifest, records: &[AlignmentRecord], i: usize) -> Result<Mesh> {
        let mesh = load_mesh(self.dataset_dir().join(&manifest.subjects[i].mesh))?;
        Ok(mesh.apply_transform(&records[i].transform()?))
    }

    /// Full-resolution aligned vertices and the cloud patches are drawn from.
    fn subject_clouds(&self, manifest: &DatasetManifest, records: &[AlignmentRecord]) -> Result<Vec<(PointCloud, PointCloud)>> {
        self.pool.install(|| {
            (0..records.len())
                .into_par_iter()
                .map(|i| {
                    let mesh = self.aligned_mesh(manifest, records, i)?;
                    let full = mesh.to_cloud()?;
                    let source = match self.cfg.patch.source {
                        PatchSource::Vertices => full.clone(),
                        PatchSource::Resampled { points } => {
                            sample_surface(&mesh, points, derive_seed(self.cfg.patch.seed, &[0x5a, i as u64]))?
                        }
                    };
                    Ok((full, source))
                })
                .collect()
        })
    }

    fn build_patches(&self, manifest: &DatasetManifest, dir: &Path) -> Result<Summary> {
        let src = self.alignment_dir();
        let records: Vec<AlignmentRecord> = read_json(&src.join("alignment.json"))?;
        let table: LandmarkTable = read_json(&src.join("landmarks.json"))?;
        let folds: Vec<Fold> = read_json(&src.join("folds.json"))?;
        let gt = table.sets()?;
        let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
        let clouds = self.subject_clouds(manifest, &records)?;
        let folds_used = self.max_folds.map_or(folds.len(), |k| k.min(folds.len()));
        self.pool.install(|| {
            (0..folds_used)
                .into_par_iter()
                .map(|f| {
                    let fd = fold_dir(dir, f);
                    create_dir(&fd)?;
                    let train_sets: Vec<LandmarkSet> = folds[f].train.iter().map(|&i| gt[i].clone()).collect();
                    let atlas = mean_template(&train_sets)?;
                    atlas.write_csv(fd.join("atlas.csv"))?;
                    let fits: Vec<LandmarkSet> = clouds.iter().map(|(full, _)| project_to_surface(&atlas, full)).collect();
                    write_json(&fd.join("fits.json"), &LandmarkTable::from_sets(&ids, &fits)?)?;
                    let subjects: Vec<PatchSubject<'_>> = clouds
                        .iter()
                        .zip(&fits)
                        .enumerate()
                        .map(|(index, ((_, source), centers))| PatchSubject {
                            index,
                            cloud: source,
                            centers,
                        })
                        .collect();
                    build_patch_tensor(&subjects, &self.cfg.patch)?.save(&fd, "patches")
                })
                .collect::<Result<Vec<()>>>()
        })?;
        Ok(BTreeMap::from([
            ("subjects".into(), json!(ids.len())),
            ("folds".into(), json!(folds_used)),
            ("patch_points".into(), json!(self.cfg.patch.strategy.points())),
        ]))
    }

    pub fn preprocess(&self) -> Result<StageReport> {
        let (manifest, dataset_sum) = self.load_dataset()?;
        let dir = self.stage_dir("preprocess");
        let mut inputs = vec![dataset_sum];
        let shared = self.alignment_dir.is_some();
        if shared {
            inputs.push(require_stage(&self.alignment_dir(), "preprocess")?);
        }
        let section = json!({
            "registration": self.cfg.registration,
            "patch": self.cfg.patch,
            "folds": self.cfg.train.folds,
            "split_seed": self.cfg.train.seed,
            "max_folds": self.max_folds,
        });
        self.run_stage("preprocess", &dir, section, inputs, |dir| {
            if !shared {
                self.align_all(&manifest, dir)?;
            }
            self.build_patches(&manifest, dir)
        })
    }

    fn folds(&self) -> Result<Vec<Fold>> {
        let folds: Vec<Fold> = read_json(&self.alignment_dir().join("folds.json"))?;
        let used = self.max_folds.map_or(folds.len(), |k| k.min(folds.len()));
        Ok(folds.into_iter().take(used).collect())
    }

    fn targets(&self) -> Result<(LandmarkTable, Array3<f64>)> {
        let table: LandmarkTable = read_json(&self.alignment_dir().join("landmarks.json"))?;
        let (m, n) = (table.subjects.len(), table.names.len());
        let mut targets = Array3::zeros((m, n, 3));
        for (s, subject) in table.subjects.iter().enumerate() {
            for (k, c) in subject.coords.iter().enumerate() {
                for d in 0..3 {
                    targets[[s, k, d]] = c[d];
                }
            }
        }
        Ok((table, targets))
    }

    pub fn train(&self) -> Result<StageReport> {
        let pre = self.stage_dir("preprocess");
        let inputs = vec![require_stage(&pre, "preprocess")?];
        let dir = self.stage_dir("train");
        let section = json!({ "arch": self.cfg.arch, "train": self.cfg.train });
        self.run_stage("train", &dir, section, inputs, |dir| {
            let folds = self.folds()?;
            let (_, targets) = self.targets()?;
            let losses: Vec<(f64, usize)> = self.pool.install(|| {
                folds
                    .par_iter()
                    .enumerate()
                    .map(|(f, fold)| {
                        let patches = PatchTensor::load(fold_dir(&pre, f), "patches")?;
                        let mut cfg = self.cfg.train.clone();
                        cfg.seed = derive_seed(cfg.seed, &[f as u64]);
                        let out = train(&patches, targets.view(), &fold.train, &fold.val, &self.cfg.arch, &cfg)?;
                        let best = out
                            .history
                            .best()
                            .map(|r| r.val_loss)
                            .unwrap_or(f64::NAN);
                        let fd = fold_dir(dir, f);
                        create_dir(&fd)?;
                        let meta = json!({ "fold": f, "best_epoch": out.history.best_epoch, "val_loss": best });
                        save_checkpoint(fd.join("checkpoint.bin"), &out.params, cfg.seed, meta)?;
                        out.history.save(&fd, "history")?;
                        info!("fold {f}: best validation loss {best:.4} at epoch {}", out.history.best_epoch);
                        Ok((best, out.history.best_epoch))
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            let mean = losses.iter().map(|l| l.0).sum::<f64>() / losses.len() as f64;
            Ok(BTreeMap::from([
                ("folds".into(), json!(losses.len())),
                ("val_loss".into(), json!(losses.iter().map(|l| l.0).collect::<Vec<_>>())),
                ("best_epoch".into(), json!(losses.iter().map(|l| l.1).collect::<Vec<_>>())),
                ("mean_val_loss".into(), json!(mean)),
            ]))
        })
    }

    pub fn predict(&self) -> Result<StageReport> {
        let (manifest, _) = self.load_dataset()?;
        let pre = self.stage_dir("preprocess");
        let trained = self.stage_dir("train");
        let inputs = vec![require_stage(&pre, "preprocess")?, require_stage(&trained, "train")?];
        let dir = self.stage_dir("predict");
        let section = json!({ "predict": self.cfg.predict });
        self.run_stage("predict", &dir, section, inputs, |dir| {
            let records: Vec<AlignmentRecord> = read_json(&self.alignment_dir().join("alignment.json"))?;
            let (table, _) = self.targets()?;
            let folds = self.folds()?;
            let aligned_dir = dir.join("aligned");
            create_dir(&aligned_dir)?;
            let post = self.cfg.predict.postprocess;
            let counts: Vec<usize> = self.pool.install(|| {
                folds
                    .par_iter()
                    .enumerate()
                    .map(|(f, fold)| {
                        let (params, _) = load_checkpoint(fold_dir(&trained, f).join("checkpoint.bin"))?;
                        let patches = PatchTensor::load(fold_dir(&pre, f), "patches")?.select(&fold.val);
                        let out = predict(&params, patches.view())?;
                        for (j, &i) in fold.val.iter().enumerate() {
                            let coords = (0..table.names.len())
                                .map(|k| {
                                    Point3::new(
                                        f64::from(out[[j, k, 0]]),
                                        f64::from(out[[j, k, 1]]),
                                        f64::from(out[[j, k, 2]]),
                                    )
                                })
                                .collect();
                            let raw = LandmarkSet::new(table.names.clone(), coords)?;
                            let surface = self.aligned_mesh(&manifest, &records, i)?.to_cloud()?;
                            let aligned = post.apply(&raw, &surface)?;
                            let id = &records[i].id;
                            aligned.write_csv(subject_name(&aligned_dir, id))?;
                            let back: RigidTransform = records[i].transform()?.inverse();
                            aligned.apply_transform(&back).write_csv(subject_name(dir, id))?;
                        }
                        Ok(fold.val.len())
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            Ok(BTreeMap::from([
                ("subjects".into(), json!(counts.iter().sum::<usize>())),
                ("postprocess".into(), json!(post.to_string())),
            ]))
        })
    }

    fn measurement_spec(&self) -> Result<MeasurementSpec> {
        match &self.cfg.evaluate.measurements {
            Some(p) => MeasurementSpec::load(p),
            None => Ok(MeasurementSpec::default()),
        }
    }

    fn fold_report(&self, pred: &[LandmarkSet], gt: &[LandmarkSet], spec: &MeasurementSpec) -> Result<EvalReport> {
        if self.cfg.evaluate.exclude_landmarks.is_empty() {
            evaluate(pred, gt, spec)
        } else {
            exclude_landmarks(pred, gt, &self.cfg.evaluate.exclude_landmarks, spec)
        }
    }

    fn write_report(&self, report: &EvalReport, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        report.save(dir)?;
        if self.cfg.evaluate.svg {
            let m = dir.join("distance_matrix.svg");
            std::fs::write(&m, svg::matrix_svg(report)).map_err(|e| Error::io(&m, e))?;
            let b = dir.join("bland_altman.svg");
            std::fs::write(&b, svg::bland_altman_svg(report)).map_err(|e| Error::io(&b, e))?;
        }
        Ok(())
    }

    pub fn evaluate(&self) -> Result<StageReport> {
        let pre = self.stage_dir("preprocess");
        let predicted = self.stage_dir("predict");
        let inputs = vec![require_stage(&pre, "preprocess")?, require_stage(&predicted, "predict")?];
        let dir = self.stage_dir("evaluate");
        let mut section = serde_json::to_value(&self.cfg.evaluate)?;
        if let Some(p) = &self.cfg.evaluate.measurements {
            section["measurements_sha256"] = json!(crate::synthetic::sha256_file(p)?);
        }
        self.run_stage("evaluate", &dir, section, inputs, |dir| {
            let spec = self.measurement_spec()?;
            let (table, _) = self.targets()?;
            let gt = table.sets()?;
            spec.check(&table.names)?;
            let folds = self.folds()?;
            let mut network = Vec::new();
            let mut atlas = Vec::new();
            for (f, fold) in folds.iter().enumerate() {
                let fits: LandmarkTable = read_json(&fold_dir(&pre, f).join("fits.json"))?;
                let truth: Vec<LandmarkSet> = fold.val.iter().map(|&i| gt[i].clone()).collect();
                let pred: Vec<LandmarkSet> = fold
                    .val
                    .iter()
                    .map(|&i| LandmarkSet::read_csv(subject_name(&predicted.join("aligned"), &table.subjects[i].id)))
                    .collect::<Result<_>>()?;
                let base: Vec<LandmarkSet> = fold.val.iter().map(|&i| fits.set(i)).collect::<Result<_>>()?;
                network.push(self.fold_report(&pred, &truth, &spec)?);
                atlas.push(self.fold_report(&base, &truth, &spec)?);
            }
            let network = aggregate_folds(&network)?;
            let atlas = aggregate_folds(&atlas)?;
            self.write_report(&network, dir)?;
            self.write_report(&atlas, &dir.join("atlas"))?;
            let improvement = 1.0 - network.pointwise.overall.mean / atlas.pointwise.overall.mean;
            let summary = BTreeMap::from([
                ("landmarks".into(), json!(network.landmarks.len())),
                ("folds".into(), json!(network.folds)),
                ("pointwise_mean".into(), json!(network.pointwise.overall.mean)),
                ("pointwise_std".into(), json!(network.pointwise.overall.std)),
                ("distance_mean".into(), json!(network.distance_matrix.mean)),
                ("atlas_pointwise_mean".into(), json!(atlas.pointwise.overall.mean)),
                ("atlas_distance_mean".into(), json!(atlas.distance_matrix.mean)),
                ("pointwise_improvement".into(), json!(improvement)),
            ]);
            write_json(&dir.join("summary.json"), &summary)?;
            Ok(summary)
        })
    }

    pub fn ablate(&self) -> Result<StageReport> {
        let pre = self.stage_dir("preprocess");
        let inputs = vec![require_stage(&pre, "preprocess")?];
        let dir = self.stage_dir("ablate");
        let section = json!({
            "ablation": self.cfg.ablation,
            "patch": self.cfg.patch,
            "arch": self.cfg.arch,
            "train": self.cfg.train,
            "predict": self.cfg.predict,
            "evaluate": self.cfg.evaluate,
        });
        self.run_stage("ablate", &dir, section, inputs, |dir| {
            let mut rows = Vec::new();
            for name in &self.cfg.ablation.variants {
                info!("ablation variant {name}");
                let mut vcfg = apply_variant(&self.cfg, name)?;
                vcfg.output_dir = dir.join(name);
                vcfg.dataset.dir = Some(self.dataset_dir());
                let variant = Pipeline {
                    cfg: vcfg,
                    seeds: self.seeds,
                    opts: self.opts,
                    pool: rayon::ThreadPoolBuilder::new()
                        .num_threads(self.opts.jobs.max(1))
                        .build()
                        .map_err(|e| Error::config("jobs", e.to_string()))?,
                    alignment_dir: Some(pre.clone()),
                    max_folds: self.cfg.ablation.max_folds,
                };
                variant.cfg.validate()?;
                variant.preprocess()?;
                let trained = variant.train()?;
                variant.predict()?;
                let eval = variant.evaluate()?;
                let num = |s: &Summary, k: &str| s.get(k).and_then(Value::as_f64).unwrap_or(f64::NAN);
                rows.push(AblationRow {
                    variant: name.clone(),
                    description: describe(name).to_string(),
                    folds: trained.summary.get("folds").and_then(Value::as_u64).unwrap_or(0) as usize,
                    val_loss: num(&trained.summary, "mean_val_loss"),
                    pointwise_mean: num(&eval.summary, "pointwise_mean"),
                    pointwise_std: num(&eval.summary, "pointwise_std"),
                    distance_mean: num(&eval.summary, "distance_mean"),
                });
            }
            let csv_path = dir.join("ablation.csv");
            std::fs::write(&csv_path, ablation_csv(&rows)?).map_err(|e| Error::io(&csv_path, e))?;
            write_json(&dir.join("ablation.json"), &rows)?;
            Ok(BTreeMap::from([("rows".into(), serde_json::to_value(&rows)?)]))
        })
    }
}
