use ndarray::{Array3, ArrayView3};

use crate::error::{Error, Result};
use crate::network::Real;

/// Loss value split into its weighted parts (subject means).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts<F> {
    pub total: F,
    pub localization: F,
    pub distance: F,
}

/// `alpha * mean_k |p_k - g_k| + beta * mean_{i,j} | |p_i - p_j| - |g_i - g_j| |`,
/// averaged over subjects, with its gradient w.r.t. `pred`. The pairwise
/// mean runs over all `n^2` ordered pairs including `i = j`.
pub fn composite_loss<F: Real>(
    pred: ArrayView3<F>,
    gt: ArrayView3<F>,
    alpha: F,
    beta: F,
) -> Result<(LossParts<F>, Array3<F>)> {
    if pred.dim() != gt.dim() || pred.dim().2 != 3 {
        return Err(Error::Shape(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.dim(),
            gt.dim()
        )));
    }
    let (m, n, _) = pred.dim();
    if m == 0 || n == 0 {
        return Err(Error::Shape("empty landmark batch".into()));
    }
    let mut grad = Array3::zeros(pred.raw_dim());
    let mf = F::lit(m as f64);
    let nf = F::lit(n as f64);
    let loc_scale = alpha / (nf * mf);
    let dist_scale = beta / (nf * nf * mf);
    let mut loc_sum = F::zero();
    let mut dist_sum = F::zero();
    for s in 0..m {
        for k in 0..n {
            let d = [
                pred[[s, k, 0]] - gt[[s, k, 0]],
                pred[[s, k, 1]] - gt[[s, k, 1]],
                pred[[s, k, 2]] - gt[[s, k, 2]],
            ];
            let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            loc_sum += norm;
            if norm > F::zero() {
                for c in 0..3 {
                    grad[[s, k, c]] += loc_scale * d[c] / norm;
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let dp = [
                    pred[[s, i, 0]] - pred[[s, j, 0]],
                    pred[[s, i, 1]] - pred[[s, j, 1]],
                    pred[[s, i, 2]] - pred[[s, j, 2]],
                ];
                let dg = [
                    gt[[s, i, 0]] - gt[[s, j, 0]],
                    gt[[s, i, 1]] - gt[[s, j, 1]],
                    gt[[s, i, 2]] - gt[[s, j, 2]],
                ];
                let np = (dp[0] * dp[0] + dp[1] * dp[1] + dp[2] * dp[2]).sqrt();
                let ng = (dg[0] * dg[0] + dg[1] * dg[1] + dg[2] * dg[2]).sqrt();
                let diff = np - ng;
                dist_sum += diff.abs();
                if diff != F::zero() && np > F::zero() {
                    let sign = diff.signum();
                    for c in 0..3 {
                        let g = dist_scale * sign * dp[c] / np;
                        grad[[s, i, c]] += g;
                        grad[[s, j, c]] -= g;
                    }
                }
            }
        }
    }
    let localization = loc_sum / (nf * mf);
    let distance = dist_sum / (nf * nf * mf);
    let total = alpha * localization + beta * distance;
    if !total.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok((
        LossParts {
            total,
            localization,
            distance,
        },
        grad,
    ))
}
