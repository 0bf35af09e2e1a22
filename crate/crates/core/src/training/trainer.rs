use std::path::Path;
use std::time::Instant;

use ndarray::{Array3, ArrayView3, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{adam_step, composite_loss, AdamState, EarlyStopping, PlateauScheduler};
use crate::error::{Error, Result};
use crate::network::{backward, forward, init_params, ArchConfig, Mode, ModelParams};
use crate::patching::PatchTensor;
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub scheduler_factor: f64,
    pub scheduler_patience: usize,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub folds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            beta: 0.4,
            learning_rate: 1e-3,
            batch_size: 16,
            scheduler_factor: 0.5,
            scheduler_patience: 8,
            early_stop_patience: 30,
            max_epochs: 250,
            seed: 0,
            folds: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 || self.alpha + self.beta <= 0.0 {
            return Err(Error::config("train.alpha", "alpha and beta must be >= 0 with a positive sum"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("train.learning_rate", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be >= 1"));
        }
        if !(self.scheduler_factor > 0.0 && self.scheduler_factor <= 1.0) {
            return Err(Error::config("train.scheduler_factor", "must be in (0, 1]"));
        }
        if self.scheduler_patience == 0 || self.early_stop_patience == 0 {
            return Err(Error::config("train.scheduler_patience", "patiences must be >= 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("train.max_epochs", "must be >= 1"));
        }
        if self.folds < 2 {
            return Err(Error::config("train.folds", "must be >= 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch with the lowest validation loss.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.epochs {
            w.serialize(e)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::format("csv", e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        let csv_path = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv_path, self.to_csv_string()?).map_err(|e| Error::io(&csv_path, e))?;
        let json_path = dir.join(format!("{stem}.json"));
        std::fs::write(&json_path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&json_path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub params: ModelParams<f32>,
    pub history: TrainHistory,
}

/// Mean composite loss over `subjects` in eval mode.
pub fn evaluate_loss(
    params: &ModelParams<f32>,
    patches: &PatchTensor,
    targets: ArrayView3<f64>,
    subjects: &[usize],
    cfg: &TrainConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for batch in subjects.chunks(cfg.batch_size) {
        let sub = patches.select(batch);
        let pred = forward(params, sub.view(), Mode::Eval, 0)?.predictions.mapv(f64::from);
        let gt = targets.select(Axis(0), batch);
        let (loss, _) = composite_loss(pred.view(), gt.view(), cfg.alpha, cfg.beta)?;
        total += loss.total * batch.len() as f64;
    }
    Ok(total / subjects.len() as f64)
}

/// Trains from a fresh initialization and returns the best-validation
/// parameters. `targets` holds ground truth for every subject in `patches`.
pub fn train(
    patches: &PatchTensor,
    targets: ArrayView3<f64>,
    train_idx: &[usize],
    val_idx: &[usize],
    arch: &ArchConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let [m, n, k, _] = patches.shape;
    if targets.dim() != (m, n, 3) {
        return Err(Error::Shape(format!(
            "targets {:?} do not match patches {:?}",
            targets.dim(),
            patches.shape
        )));
    }
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::config("train", "training and validation sets must be non-empty"));
    }
    if let Some(&bad) = train_idx.iter().chain(val_idx).find(|&&i| i >= m) {
        return Err(Error::Shape(format!("subject index {bad} out of range for {m} subjects")));
    }
    let mut params: ModelParams<f32> = init_params(arch, k, derive_seed(cfg.seed, &[0]))?;
    let mut adam = AdamState::new(&params);
    let mut scheduler = PlateauScheduler::new(cfg.learning_rate, cfg.scheduler_factor, cfg.scheduler_patience);
    let mut stopper = EarlyStopping::new(cfg.early_stop_patience);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ModelParams<f32>)> = None;
    let mut lr = cfg.learning_rate;
    let mut order = train_idx.to_vec();

    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        order.copy_from_slice(train_idx);
        order.shuffle(&mut stream(cfg.seed, &[1, epoch as u64]));
        let mut loss_sum = 0.0;
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            let sub = patches.select(batch);
            let trace = forward(&params, sub.view(), Mode::Train, derive_seed(cfg.seed, &[2, epoch as u64, bi as u64]))?;
            let pred = trace.predictions.mapv(f64::from);
            let gt = targets.select(Axis(0), batch);
            let (loss, grad) = composite_loss(pred.view(), gt.view(), cfg.alpha, cfg.beta).map_err(|e| match e {
                Error::NonFinite(what) => Error::NonFinite(format!("{what} at epoch {epoch}, batch {bi}")),
                other => other,
            })?;
            let grad: Array3<f32> = grad.mapv(|v| v as f32);
            let grads = backward(&trace, &params, &grad)?;
            adam_step(&mut params, &grads, &mut adam, lr).map_err(|e| match e {
                Error::NonFinite(what) => Error::NonFinite(format!("{what} at epoch {epoch}, batch {bi}")),
                other => other,
            })?;
            loss_sum += loss.total * batch.len() as f64;
        }
        let train_loss = loss_sum / order.len() as f64;
        let val_loss = evaluate_loss(&params, patches, targets, val_idx, cfg)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss at epoch {epoch}")));
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
            seconds: start.elapsed().as_secs_f64(),
        });
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, params.clone()));
            history.best_epoch = epoch;
        }
        log::info!("epoch {epoch}: train {train_loss:.4} val {val_loss:.4} lr {lr:.2e}");
        lr = scheduler.step(val_loss);
        if stopper.step(val_loss) {
            log::info!("early stop after epoch {epoch}");
            break;
        }
    }
    let (_, params) = best.expect("at least one epoch");
    Ok(TrainOutcome { params, history })
}

/// One cross-validation split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Shuffles `ids` with `seed` and cuts them into `k` near-equal validation
/// folds; each fold trains on the remaining ids. Both lists are sorted.
pub fn kfold_split(ids: &[usize], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::config("train.folds", "must be >= 2"));
    }
    if k > ids.len() {
        return Err(Error::config(
            "train.folds",
            format!("{k} folds requested for {} subjects", ids.len()),
        ));
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut stream(seed, &[3]));
    let base = ids.len() / k;
    let extra = ids.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut val = shuffled[start..start + len].to_vec();
        let mut train: Vec<usize> = shuffled[..start].iter().chain(&shuffled[start + len..]).copied().collect();
        val.sort_unstable();
        train.sort_unstable();
        folds.push(Fold { train, val });
        start += len;
    }
    Ok(folds)
}
