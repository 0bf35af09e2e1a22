use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ArchConfig, Real};
use crate::error::Result;

/// Affine layer `y = x W + b` with `W: in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub w: Array2<F>,
    pub b: Array1<F>,
}

/// Attention scorer `tanh(S w + b)`; `b` has a single element.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<F> {
    pub w: Array1<F>,
    pub b: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams<F> {
    pub conv1: Dense<F>,
    pub conv2: Dense<F>,
    pub attention: Option<AttentionParams<F>>,
}

/// Every learnable tensor of the network plus its architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    pub arch: ArchConfig,
    /// Patch size the MLP input width was built for.
    pub points: usize,
    pub blocks: Vec<BlockParams<F>>,
    pub mlp: Vec<Dense<F>>,
}

impl<F: Real> Dense<F> {
    fn zeros(inp: usize, out: usize) -> Self {
        Self {
            w: Array2::zeros((inp, out)),
            b: Array1::zeros(out),
        }
    }
}

impl<F: Real> ModelParams<F> {
    /// All-zero parameters with the shapes implied by `arch` and `points`.
    pub fn zeros(arch: &ArchConfig, points: usize) -> Result<Self> {
        arch.validate()?;
        arch.check_points(points)?;
        let mut c = 3;
        let blocks = (0..arch.depth)
            .map(|b| {
                let f = arch.filters[b];
                let block = BlockParams {
                    conv1: Dense::zeros(c, f),
                    conv2: Dense::zeros(f, f),
                    attention: arch.block_has_attention(b).then(|| AttentionParams {
                        w: Array1::zeros(f),
                        b: Array1::zeros(1),
                    }),
                };
                c = f;
                block
            })
            .collect();
        let mut inp = arch.hybrid_width(points);
        let mlp = arch
            .mlp
            .iter()
            .map(|&out| {
                let d = Dense::zeros(inp, out);
                inp = out;
                d
            })
            .collect();
        Ok(Self {
            arch: arch.clone(),
            points,
            blocks,
            mlp,
        })
    }

    /// Named tensors in declaration order with their shapes.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.conv1.w"), b.conv1.w.shape().to_vec()));
            out.push((format!("block{i}.conv1.b"), b.conv1.b.shape().to_vec()));
            out.push((format!("block{i}.conv2.w"), b.conv2.w.shape().to_vec()));
            out.push((format!("block{i}.conv2.b"), b.conv2.b.shape().to_vec()));
            if let Some(a) = &b.attention {
                out.push((format!("block{i}.attention.w"), vec![a.w.len(), 1]));
                out.push((format!("block{i}.attention.b"), vec![1]));
            }
        }
        for (i, d) in self.mlp.iter().enumerate() {
            out.push((format!("mlp{i}.w"), d.w.shape().to_vec()));
            out.push((format!("mlp{i}.b"), d.b.shape().to_vec()));
        }
        out
    }

    /// Tensor data in declaration order.
    pub fn tensors(&self) -> Vec<&[F]> {
        let mut out: Vec<&[F]> = Vec::new();
        for b in &self.blocks {
            out.push(b.conv1.w.as_slice().expect("contiguous"));
            out.push(b.conv1.b.as_slice().expect("contiguous"));
            out.push(b.conv2.w.as_slice().expect("contiguous"));
            out.push(b.conv2.b.as_slice().expect("contiguous"));
            if let Some(a) = &b.attention {
                out.push(a.w.as_slice().expect("contiguous"));
                out.push(a.b.as_slice().expect("contiguous"));
            }
        }
        for d in &self.mlp {
            out.push(d.w.as_slice().expect("contiguous"));
            out.push(d.b.as_slice().expect("contiguous"));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = Vec::new();
        for b in &mut self.blocks {
            out.push(b.conv1.w.as_slice_mut().expect("contiguous"));
            out.push(b.conv1.b.as_slice_mut().expect("contiguous"));
            out.push(b.conv2.w.as_slice_mut().expect("contiguous"));
            out.push(b.conv2.b.as_slice_mut().expect("contiguous"));
            if let Some(a) = &mut b.attention {
                out.push(a.w.as_slice_mut().expect("contiguous"));
                out.push(a.b.as_slice_mut().expect("contiguous"));
            }
        }
        for d in &mut self.mlp {
            out.push(d.w.as_slice_mut().expect("contiguous"));
            out.push(d.b.as_slice_mut().expect("contiguous"));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Element-wise cast, e.g. f32 checkpoint to f64 for analysis.
    pub fn cast<G: Real>(&self) -> ModelParams<G> {
        let mut out = ModelParams::<G>::zeros(&self.arch, self.points).expect("validated shapes");
        for (dst, src) in out.tensors_mut().into_iter().zip(self.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = G::lit(s.to_f64().expect("finite"));
            }
        }
        out
    }
}

/// Glorot-normal weights (variance `2 / (fan_in + fan_out)`), zero biases.
pub fn init_params<F: Real>(arch: &ArchConfig, points: usize, seed: u64) -> Result<ModelParams<F>> {
    let mut params = ModelParams::zeros(arch, points)?;
    let layout = params.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for ((name, shape), tensor) in layout.iter().zip(params.tensors_mut()) {
        if name.ends_with(".b") {
            continue;
        }
        let std = (2.0 / (shape[0] + shape[1]) as f64).sqrt();
        for v in tensor.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = F::lit(z * std);
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_zero_bias() {
        let arch = ArchConfig::default();
        let a: ModelParams<f32> = init_params(&arch, 100, 3).unwrap();
        let b: ModelParams<f32> = init_params(&arch, 100, 3).unwrap();
        assert_eq!(a, b);
        for ((name, _), t) in a.layout().iter().zip(a.tensors()) {
            if name.ends_with(".b") {
                assert!(t.iter().all(|&v| v == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn glorot_std_of_first_conv() {
        // 3x32 weights pooled over ten seeds.
        let arch = ArchConfig::default();
        let mut vals = Vec::new();
        for seed in 0..10 {
            let p: ModelParams<f64> = init_params(&arch, 100, seed).unwrap();
            vals.extend(p.blocks[0].conv1.w.iter().copied());
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let want = (2.0f64 / 35.0).sqrt();
        assert!((std / want - 1.0).abs() < 0.2, "std {std} vs {want}");
    }

    #[test]
    fn layout_matches_tensors() {
        let p: ModelParams<f32> = init_params(&ArchConfig::default(), 1000, 0).unwrap();
        let layout = p.layout();
        assert_eq!(layout.len(), p.tensors().len());
        for ((_, shape), t) in layout.iter().zip(p.tensors()) {
            assert_eq!(shape.iter().product::<usize>(), t.len());
        }
        assert_eq!(p.mlp[0].w.shape(), &[1504, 1024]);
    }
}
