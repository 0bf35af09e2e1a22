//! Row-major layer primitives. Point features are stored as a 2D array with
//! one row per point; patches are contiguous runs of rows.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

/// Shared per-point affine map `sigma(x W + b)`.
pub fn pointwise_conv<F: Real>(
    x: ArrayView2<F>,
    w: ArrayView2<F>,
    b: ArrayView1<F>,
    activation: Activation,
) -> Result<Array2<F>> {
    if x.ncols() != w.nrows() || w.ncols() != b.len() {
        return Err(Error::Shape(format!(
            "conv input has {} channels, weight is {}x{}, bias has {}",
            x.ncols(),
            w.nrows(),
            w.ncols(),
            b.len()
        )));
    }
    let mut out = x.dot(&w);
    out += &b;
    if activation == Activation::Relu {
        out.mapv_inplace(relu);
    }
    Ok(out)
}

pub(crate) fn relu<F: Real>(v: F) -> F {
    if v > F::zero() {
        v
    } else {
        F::zero()
    }
}

/// Max-pooled features plus the source row of every pooled value.
#[derive(Debug, Clone)]
pub struct Pooled<F> {
    pub out: Array2<F>,
    /// `argmax[r * f + c]` is the input row that produced `out[[r, c]]`.
    pub argmax: Vec<usize>,
}

/// Channel-wise max over non-overlapping windows of `factor` consecutive
/// rows. Ties resolve to the earliest row.
pub fn max_pool<F: Real>(x: ArrayView2<F>, factor: usize) -> Result<Pooled<F>> {
    let (rows, f) = x.dim();
    if factor == 0 || rows % factor != 0 {
        return Err(Error::Shape(format!("{rows} rows not divisible by pool factor {factor}")));
    }
    let out_rows = rows / factor;
    let mut out = Array2::zeros((out_rows, f));
    let mut argmax = vec![0; out_rows * f];
    for r in 0..out_rows {
        let base = r * factor;
        let mut best = x.row(base).to_owned();
        let arg = &mut argmax[r * f..(r + 1) * f];
        arg.fill(base);
        for i in 1..factor {
            let row = x.row(base + i);
            for c in 0..f {
                if row[c] > best[c] {
                    best[c] = row[c];
                    arg[c] = base + i;
                }
            }
        }
        out.row_mut(r).assign(&best);
    }
    Ok(Pooled { out, argmax })
}

/// Routes pooled gradients back to the winning rows.
pub(crate) fn max_pool_backward<F: Real>(grad: ArrayView2<F>, argmax: &[usize], rows: usize) -> Array2<F> {
    let f = grad.ncols();
    let mut out = Array2::zeros((rows, f));
    for (r, g) in grad.outer_iter().enumerate() {
        for c in 0..f {
            out[[argmax[r * f + c], c]] += g[c];
        }
    }
    out
}

/// Attention over the rows of one subject's feature map.
#[derive(Debug, Clone)]
pub struct AttentionOut<F> {
    /// Softmax weights, one per row.
    pub weights: Array1<F>,
    /// `tanh(S w + b)` per row.
    pub scores: Array1<F>,
    /// Weighted feature sum.
    pub global: Array1<F>,
}

/// `A = softmax(tanh(S w + b))`, `G = sum_j A_j S_j`.
pub fn attention<F: Real>(s: ArrayView2<F>, w: ArrayView1<F>, b: F) -> Result<AttentionOut<F>> {
    attention_impl(s, w, b, None)
}

/// Attention restricted to the `k` highest-scoring rows; the rest get zero
/// weight. Ties resolve to the lower row index.
pub fn topk_attention<F: Real>(s: ArrayView2<F>, w: ArrayView1<F>, b: F, k: usize) -> Result<AttentionOut<F>> {
    if k == 0 {
        return Err(Error::config("arch.top_k", "must be >= 1"));
    }
    attention_impl(s, w, b, Some(k))
}

fn attention_impl<F: Real>(s: ArrayView2<F>, w: ArrayView1<F>, b: F, k: Option<usize>) -> Result<AttentionOut<F>> {
    if s.ncols() != w.len() {
        return Err(Error::Shape(format!(
            "attention weight has {} entries for {} channels",
            w.len(),
            s.ncols()
        )));
    }
    let rows = s.nrows();
    if rows == 0 {
        return Err(Error::Shape("attention over zero rows".into()));
    }
    let scores = s.dot(&w).mapv(|u| (u + b).tanh());
    let mut keep = vec![true; rows];
    if let Some(k) = k.filter(|&k| k < rows) {
        let mut order: Vec<usize> = (0..rows).collect();
        order.sort_by(|&i, &j| scores[j].partial_cmp(&scores[i]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
        keep.fill(false);
        for &i in &order[..k] {
            keep[i] = true;
        }
    }
    let max = scores
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(&v, _)| v)
        .fold(F::neg_infinity(), F::max);
    let mut weights = Array1::zeros(rows);
    for i in 0..rows {
        if keep[i] {
            weights[i] = (scores[i] - max).exp();
        }
    }
    let total = weights.sum();
    weights /= total;
    let global = weights.dot(&s);
    Ok(AttentionOut { weights, scores, global })
}

/// Gradients of one attention application. Returns `(dS, dw, db)`.
pub(crate) fn attention_backward<F: Real>(
    s: ArrayView2<F>,
    w: ArrayView1<F>,
    att: &AttentionOut<F>,
    d_global: ArrayView1<F>,
) -> (Array2<F>, Array1<F>, F) {
    let a = &att.weights;
    // dG/dS_j = A_j * I
    let mut ds = Array2::zeros(s.raw_dim());
    for (j, mut row) in ds.outer_iter_mut().enumerate() {
        if a[j] != F::zero() {
            row.scaled_add(a[j], &d_global);
        }
    }
    let da = s.dot(&d_global);
    let weighted: F = a.iter().zip(da.iter()).map(|(&x, &y)| x * y).sum();
    let du: Array1<F> = (0..a.len())
        .map(|j| {
            let de = a[j] * (da[j] - weighted);
            de * (F::one() - att.scores[j] * att.scores[j])
        })
        .collect();
    let dw = du.dot(&s);
    let db = du.sum();
    for (j, mut row) in ds.outer_iter_mut().enumerate() {
        if du[j] != F::zero() {
            row.scaled_add(du[j], &w);
        }
    }
    (ds, dw, db)
}

/// Sums gradient rows for every window of `group` consecutive rows.
pub(crate) fn sum_groups<F: Real>(x: ArrayView2<F>, group: usize) -> Array2<F> {
    let groups = x.nrows() / group;
    let mut out = Array2::zeros((groups, x.ncols()));
    for g in 0..groups {
        out.row_mut(g)
            .assign(&x.slice(ndarray::s![g * group..(g + 1) * group, ..]).sum_axis(Axis(0)));
    }
    out
}
