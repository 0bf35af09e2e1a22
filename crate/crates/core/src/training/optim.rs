use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ModelParams, Real};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates plus the step count.
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    pub step: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Real> AdamState<F> {
    pub fn new(params: &ModelParams<F>) -> Self {
        let zeros: Vec<Vec<F>> = params.tensors().iter().map(|t| vec![F::zero(); t.len()]).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// Subnormal moments decay towards zero anyway but make arithmetic on
/// them very slow; they are clamped to zero.
fn flush<F: Real>(x: F) -> F {
    if x.abs() < F::min_positive_value() {
        F::zero()
    } else {
        x
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step<F: Real>(
    params: &mut ModelParams<F>,
    grads: &ModelParams<F>,
    state: &mut AdamState<F>,
    lr: f64,
) -> Result<()> {
    let names = params.layout();
    for ((name, _), g) in names.iter().zip(grads.tensors()) {
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {name}[{i}]")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let b1 = F::lit(ADAM_BETA1);
    let b2 = F::lit(ADAM_BETA2);
    let c1 = F::lit(1.0 - ADAM_BETA1.powi(t));
    let c2 = F::lit(1.0 - ADAM_BETA2.powi(t));
    let lr = F::lit(lr);
    let eps = F::lit(ADAM_EPS);
    let one = F::one();
    for (((p, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = flush(b1 * *m + (one - b1) * g);
            *v = flush(b2 * *v + (one - b2) * g * g);
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
    Ok(())
}

/// Multiplies the learning rate by `factor` after `patience` consecutive
/// epochs without a new best validation loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    best: f64,
    wait: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Self {
        Self {
            lr,
            factor,
            patience,
            best: f64::INFINITY,
            wait: 0,
        }
    }

    /// Records an epoch's validation loss; returns the learning rate for the
    /// next epoch.
    pub fn step(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best {
            self.best = val_loss;
            self.wait = 0;
        } else {
            self.wait += 1;
            if self.wait >= self.patience {
                self.lr *= self.factor;
                self.wait = 0;
            }
        }
        self.lr
    }
}

/// Signals a stop after `patience` consecutive epochs without a new best.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    best: f64,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            wait: 0,
        }
    }

    pub fn step(&mut self, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.wait = 0;
        } else {
            self.wait += 1;
        }
        self.wait >= self.patience
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_params, ArchConfig};

    fn small() -> ModelParams<f64> {
        let arch = ArchConfig {
            filters: vec![4, 4, 4],
            pool_factors: vec![2, 5, 2],
            mlp: vec![8, 8, 3],
            ..ArchConfig::default()
        };
        init_params(&arch, 20, 3).unwrap()
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut p = small();
        let before = p.clone();
        let zeros = ModelParams::zeros(&p.arch, p.points).unwrap();
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &zeros, &mut st, 1e-3).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = small();
        let before = p.clone();
        let mut g = ModelParams::zeros(&p.arch, p.points).unwrap();
        for (ti, t) in g.tensors_mut().into_iter().enumerate() {
            for (i, v) in t.iter_mut().enumerate() {
                *v = if (i + ti) % 2 == 0 { 0.37 * (i + 1) as f64 } else { -2.0 };
            }
        }
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, 1e-3).unwrap();
        for ((a, b), gt) in p.tensors().iter().zip(before.tensors()).zip(g.tensors()) {
            for i in 0..a.len() {
                let delta = a[i] - b[i];
                assert!((delta + 1e-3 * gt[i].signum()).abs() < 1e-5, "{delta}");
            }
        }
    }

    #[test]
    fn tensors_update_independently() {
        let mut p = small();
        let before = p.clone();
        let mut g = ModelParams::zeros(&p.arch, p.points).unwrap();
        g.mlp[1].w.fill(1.0);
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, 1e-2).unwrap();
        assert_eq!(p.mlp[0], before.mlp[0]);
        assert_eq!(p.blocks, before.blocks);
        assert_ne!(p.mlp[1].w, before.mlp[1].w);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = small();
        let mut g = ModelParams::zeros(&p.arch, p.points).unwrap();
        g.mlp[2].b[1] = f64::NAN;
        let mut st = AdamState::new(&p);
        let err = adam_step(&mut p, &g, &mut st, 1e-3).unwrap_err();
        assert!(err.to_string().contains("mlp2.b"));
    }

    #[test]
    fn scheduler_constant_loss() {
        let mut s = PlateauScheduler::new(1e-3, 0.5, 8);
        let lrs: Vec<f64> = (1..=17).map(|_| s.step(1.0)).collect();
        // LR returned after epoch e applies to epoch e + 1.
        assert!(lrs[..8].iter().all(|&lr| lr == 1e-3));
        assert_eq!(lrs[8], 5e-4);
        assert_eq!(lrs[16], 2.5e-4);
    }

    #[test]
    fn scheduler_decreasing_loss() {
        let mut s = PlateauScheduler::new(1e-3, 0.5, 8);
        for e in 0..50 {
            assert_eq!(s.step(100.0 - e as f64), 1e-3);
        }
    }

    #[test]
    fn early_stop_walkthrough() {
        let mut es = EarlyStopping::new(30);
        let stop = (1..=40).find(|_| es.step(1.0)).unwrap();
        assert_eq!(stop, 31);
        let mut es = EarlyStopping::new(30);
        for e in 1..=60 {
            let loss = if e == 29 { 0.5 } else { 1.0 };
            if es.step(loss) {
                assert_eq!(e, 59);
                return;
            }
        }
        panic!("never stopped");
    }
}
