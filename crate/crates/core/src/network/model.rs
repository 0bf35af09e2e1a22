use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayView4, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{attention_backward, max_pool_backward, relu, sum_groups, AttentionOut};
use super::{attention, max_pool, pointwise_conv, topk_attention, Activation, ModelParams, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active; activations cached for `backward`.
    Train,
    Eval,
}

#[derive(Debug, Clone)]
struct BlockCache<F> {
    input: Array2<F>,
    a1: Array2<F>,
    a2: Array2<F>,
    argmax: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Caches<F> {
    blocks: Vec<BlockCache<F>>,
    /// Inputs of each MLP layer (post-activation, post-dropout).
    mlp_inputs: Vec<Array2<F>>,
    /// Pre-dropout ReLU output of the first hidden layer.
    hidden: Array2<F>,
    dropout_mask: Option<Array2<F>>,
}

/// Result of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<F> {
    pub mode: Mode,
    /// Predicted landmarks, `m x n x 3`.
    pub predictions: Array3<F>,
    /// Attention weights per attention block, per subject.
    pub attention: Vec<Vec<AttentionOut<F>>>,
    pub hybrid_width: usize,
    /// Points per patch after each block's pooling.
    pub pooled_points: Vec<usize>,
    dims: (usize, usize, usize),
    fingerprint: u64,
    caches: Option<Caches<F>>,
}

/// Hash of a strided sample of every tensor: enough to catch parameters
/// updated between `forward` and `backward` without a full pass.
fn fingerprint<F: Real>(params: &ModelParams<F>) -> u64 {
    const SAMPLES: usize = 1024;
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for t in params.tensors() {
        let stride = t.len().div_ceil(SAMPLES).max(1);
        for v in t.iter().step_by(stride) {
            let bits = v.to_f64().unwrap_or(f64::NAN).to_bits();
            h = (h ^ bits).wrapping_mul(0x0100_0000_01b3);
        }
        h = (h ^ t.len() as u64).wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Runs the network on patches of shape `m x n x K x 3`.
pub fn forward<F: Real>(
    params: &ModelParams<F>,
    patches: ArrayView4<F>,
    mode: Mode,
    seed: u64,
) -> Result<ForwardTrace<F>> {
    let arch = &params.arch;
    let (m, n, k, c) = patches.dim();
    if c != 3 {
        return Err(Error::Shape(format!("patches have {c} coordinates per point, expected 3")));
    }
    if k != params.points {
        return Err(Error::Shape(format!(
            "model built for patches of {} points, got {k}",
            params.points
        )));
    }
    if m == 0 || n == 0 {
        return Err(Error::Shape("empty patch tensor".into()));
    }
    let train = mode == Mode::Train;
    let mut x = patches
        .to_shape((m * n * k, 3))
        .map_err(|e| Error::Shape(e.to_string()))?
        .to_owned();
    let mut block_caches = Vec::new();
    let mut attention_out = Vec::new();
    let mut globals: Vec<Array2<F>> = Vec::new();
    let mut pooled_points = Vec::with_capacity(params.blocks.len());

    for (bi, block) in params.blocks.iter().enumerate() {
        let a1 = pointwise_conv(x.view(), block.conv1.w.view(), block.conv1.b.view(), Activation::Relu)?;
        let a2 = pointwise_conv(a1.view(), block.conv2.w.view(), block.conv2.b.view(), Activation::Relu)?;
        if let Some(att) = &block.attention {
            let rows = a2.nrows() / m;
            let mut per_subject = Vec::with_capacity(m);
            let mut g = Array2::zeros((m, a2.ncols()));
            for si in 0..m {
                let sv = a2.slice(s![si * rows..(si + 1) * rows, ..]);
                let out = match arch.top_k {
                    Some(tk) => topk_attention(sv, att.w.view(), att.b[0], tk)?,
                    None => attention(sv, att.w.view(), att.b[0])?,
                };
                g.row_mut(si).assign(&out.global);
                per_subject.push(out);
            }
            attention_out.push(per_subject);
            globals.push(g);
        }
        let pooled = max_pool(a2.view(), arch.pool_factors[bi])?;
        let next = pooled.out;
        pooled_points.push(next.nrows() / (m * n));
        if train {
            block_caches.push(BlockCache {
                input: x,
                a1,
                a2,
                argmax: pooled.argmax,
            });
        }
        x = next;
    }

    // Hybrid feature: flattened local features, then every global descriptor.
    let rows = m * n;
    let local_width = x.len() / rows;
    let hybrid_width = local_width + globals.iter().map(|g| g.ncols()).sum::<usize>();
    let mut h = Array2::zeros((rows, hybrid_width));
    h.slice_mut(s![.., ..local_width]).assign(
        &x.to_shape((rows, local_width))
            .map_err(|e| Error::Shape(e.to_string()))?,
    );
    let mut col = local_width;
    for g in &globals {
        let w = g.ncols();
        for r in 0..rows {
            h.slice_mut(s![r, col..col + w]).assign(&g.row(r / n));
        }
        col += w;
    }

    let last = params.mlp.len() - 1;
    let mut mlp_inputs = Vec::with_capacity(params.mlp.len());
    let mut hidden = Array2::zeros((0, 0));
    let mut dropout_mask = None;
    let mut act = h;
    for (li, layer) in params.mlp.iter().enumerate() {
        let first_hidden = li == 0 && li != last;
        let activation = if first_hidden { Activation::Relu } else { Activation::Linear };
        let mut out = pointwise_conv(act.view(), layer.w.view(), layer.b.view(), activation)?;
        if first_hidden {
            if train && arch.dropout > 0.0 {
                let keep = 1.0 - arch.dropout;
                let scale = F::lit(1.0 / keep);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mask = Array2::from_shape_simple_fn(out.raw_dim(), || {
                    if rng.random::<f64>() < keep {
                        scale
                    } else {
                        F::zero()
                    }
                });
                if train {
                    hidden = out.clone();
                }
                out *= &mask;
                dropout_mask = Some(mask);
            } else if train {
                hidden = out.clone();
            }
        }
        if train {
            mlp_inputs.push(act);
        }
        act = out;
    }

    let predictions = act
        .into_shape_with_order((m, n, 3))
        .map_err(|e| Error::Shape(e.to_string()))?;
    if predictions.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network prediction".into()));
    }
    Ok(ForwardTrace {
        mode,
        predictions,
        attention: attention_out,
        hybrid_width,
        pooled_points,
        dims: (m, n, k),
        fingerprint: fingerprint(params),
        caches: train.then_some(Caches {
            blocks: block_caches,
            mlp_inputs,
            hidden,
            dropout_mask,
        }),
    })
}

/// Eval-mode predictions, `m x n x 3`.
pub fn predict<F: Real>(params: &ModelParams<F>, patches: ArrayView4<F>) -> Result<Array3<F>> {
    Ok(forward(params, patches, Mode::Eval, 0)?.predictions)
}

/// Reverse-mode gradients of a scalar loss with `d_pred = dL/dL̂` (`m x n x 3`).
pub fn backward<F: Real>(
    trace: &ForwardTrace<F>,
    params: &ModelParams<F>,
    d_pred: &Array3<F>,
) -> Result<ModelParams<F>> {
    let caches = trace
        .caches
        .as_ref()
        .ok_or_else(|| Error::Trace("trace was produced in eval mode and holds no activations".into()))?;
    if trace.fingerprint != fingerprint(params) {
        return Err(Error::Trace("parameters changed since the forward pass".into()));
    }
    let (m, n, _) = trace.dims;
    if d_pred.dim() != (m, n, 3) {
        return Err(Error::Shape(format!(
            "loss gradient has shape {:?}, predictions are {:?}",
            d_pred.dim(),
            (m, n, 3)
        )));
    }
    let mut grads = ModelParams::zeros(&params.arch, params.points)?;
    let rows = m * n;
    let mut g = d_pred
        .to_shape((rows, 3))
        .map_err(|e| Error::Shape(e.to_string()))?
        .to_owned();

    let last = params.mlp.len() - 1;
    for li in (0..params.mlp.len()).rev() {
        let input = &caches.mlp_inputs[li];
        grads.mlp[li].w = input.t().dot(&g);
        grads.mlp[li].b = g.sum_axis(Axis(0));
        let mut d_in = g.dot(&params.mlp[li].w.t());
        if li == 1 && last >= 1 {
            // Input of layer 1 is dropout(relu(z0)).
            if let Some(mask) = &caches.dropout_mask {
                d_in *= mask;
            }
            d_in.zip_mut_with(&caches.hidden, |d, &a| {
                if a <= F::zero() {
                    *d = F::zero();
                }
            });
        }
        g = d_in;
    }

    // Split dH into local and global parts.
    let local_width = trace.hybrid_width
        - params
            .blocks
            .iter()
            .filter_map(|b| b.attention.as_ref().map(|a| a.w.len()))
            .sum::<usize>();
    let f_last = params.arch.filters[params.arch.depth - 1];
    let mut d_x = g
        .slice(s![.., ..local_width])
        .to_shape((rows * local_width / f_last, f_last))
        .map_err(|e| Error::Shape(e.to_string()))?
        .to_owned();
    let mut global_grads = Vec::new();
    let mut col = local_width;
    for b in &params.blocks {
        if let Some(a) = &b.attention {
            let w = a.w.len();
            global_grads.push(sum_groups(g.slice(s![.., col..col + w]), n));
            col += w;
        }
    }

    let mut att_idx = global_grads.len();
    for bi in (0..params.blocks.len()).rev() {
        let block = &params.blocks[bi];
        let cache = &caches.blocks[bi];
        let mut d_a2 = max_pool_backward(d_x.view(), &cache.argmax, cache.a2.nrows());
        if let Some(att) = &block.attention {
            att_idx -= 1;
            let per = cache.a2.nrows() / m;
            let mut dw = Array1::zeros(att.w.len());
            let mut db = F::zero();
            for si in 0..m {
                let sv = cache.a2.slice(s![si * per..(si + 1) * per, ..]);
                let (ds, dws, dbs) = attention_backward(
                    sv,
                    att.w.view(),
                    &trace.attention[att_idx][si],
                    global_grads[att_idx].row(si),
                );
                d_a2.slice_mut(s![si * per..(si + 1) * per, ..]).zip_mut_with(&ds, |d, &v| *d = *d + v);
                dw += &dws;
                db = db + dbs;
            }
            let ga = grads.blocks[bi].attention.as_mut().expect("same layout");
            ga.w = dw;
            ga.b[0] = db;
        }
        let d_z2 = relu_backward(d_a2, cache.a2.view());
        grads.blocks[bi].conv2.w = cache.a1.t().dot(&d_z2);
        grads.blocks[bi].conv2.b = d_z2.sum_axis(Axis(0));
        let d_a1 = d_z2.dot(&block.conv2.w.t());
        let d_z1 = relu_backward(d_a1, cache.a1.view());
        grads.blocks[bi].conv1.w = cache.input.t().dot(&d_z1);
        grads.blocks[bi].conv1.b = d_z1.sum_axis(Axis(0));
        if bi > 0 {
            d_x = d_z1.dot(&block.conv1.w.t());
        }
    }
    Ok(grads)
}

fn relu_backward<F: Real>(mut grad: Array2<F>, activated: ArrayView2<F>) -> Array2<F> {
    grad.zip_mut_with(&activated, |d, &a| {
        if relu(a) <= F::zero() {
            *d = F::zero();
        }
    });
    grad
}
