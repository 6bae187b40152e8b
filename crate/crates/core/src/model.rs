//! The trainable adaptor stack shared by all three stages:
//! linear → ReLU/dropout → linear → ReLU/dropout → statistics pooling → head.
//!
//! The head is either a scalar severity regressor or a projection whose rows
//! are L2-normalised for the contrastive losses. Batches are processed by
//! stacking every utterance's frames into one matrix so the two frame-level
//! layers run as single matrix products.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::data::{apply_normalization, FeatureSequence, NormalizeMode};
use crate::error::{Error, Result};
use crate::numerics::{
    dropout, linear_backward, linear_forward, relu, relu_backward, stats_pool, stats_pool_backward,
    validate_dropout, DropoutMask, Linear, LinearGrad, Matrix, PoolingMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub proj_dim: usize,
    pub dropout: f64,
    pub pooling: PoolingMode,
    pub normalize: NormalizeMode,
    /// L2-normalise projection outputs before the contrastive loss.
    pub normalize_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 320,
            proj_dim: 128,
            dropout: 0.1,
            pooling: PoolingMode::MeanStd,
            normalize: NormalizeMode::FrameL2,
            normalize_embeddings: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        validate_dropout(self.dropout)?;
        if self.hidden_dim == 0 || self.proj_dim == 0 {
            return Err(Error::Parameter("hidden_dim and proj_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn pooled_dim(&self) -> usize {
        self.pooling.output_dim(self.hidden_dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Regression,
    Projection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptorNet {
    pub layer1: Linear,
    pub layer2: Linear,
    pub head: Linear,
    pub head_kind: HeadKind,
    pub pooling: PoolingMode,
    pub dropout: f64,
    pub normalize: NormalizeMode,
    pub normalize_embeddings: bool,
}

pub const PARAM_NAMES: [&str; 6] = [
    "layer1.weight",
    "layer1.bias",
    "layer2.weight",
    "layer2.bias",
    "head.weight",
    "head.bias",
];

#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads {
    pub layer1: LinearGrad,
    pub layer2: LinearGrad,
    pub head: LinearGrad,
}

impl NetGrads {
    pub fn slices(&self) -> [&[f64]; 6] {
        [
            self.layer1.weight.data(),
            &self.layer1.bias,
            self.layer2.weight.data(),
            &self.layer2.bias,
            self.head.weight.data(),
            &self.head.bias,
        ]
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    offsets: Vec<usize>,
    x: Matrix,
    pre1: Matrix,
    mask1: DropoutMask,
    h1: Matrix,
    pre2: Matrix,
    mask2: DropoutMask,
    h2: Matrix,
    pooled: Matrix,
    /// Head output before optional normalisation.
    raw: Matrix,
    output: Matrix,
}

impl ForwardCache {
    pub fn pooled(&self) -> &Matrix {
        &self.pooled
    }

    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

impl AdaptorNet {
    fn init<R: Rng + ?Sized>(in_dim: usize, cfg: &ModelConfig, head_kind: HeadKind, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if in_dim == 0 {
            return Err(Error::Parameter("input dimension must be positive".into()));
        }
        let layer1 = Linear::init(in_dim, cfg.hidden_dim, rng);
        let layer2 = Linear::init(cfg.hidden_dim, cfg.hidden_dim, rng);
        let out = match head_kind {
            HeadKind::Regression => 1,
            HeadKind::Projection => cfg.proj_dim,
        };
        let head = Linear::init(cfg.pooled_dim(), out, rng);
        Ok(Self {
            layer1,
            layer2,
            head,
            head_kind,
            pooling: cfg.pooling,
            dropout: cfg.dropout,
            normalize: cfg.normalize,
            normalize_embeddings: cfg.normalize_embeddings,
        })
    }

    pub fn init_regressor<R: Rng + ?Sized>(in_dim: usize, cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        Self::init(in_dim, cfg, HeadKind::Regression, rng)
    }

    pub fn init_projector<R: Rng + ?Sized>(in_dim: usize, cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        Self::init(in_dim, cfg, HeadKind::Projection, rng)
    }

    pub fn input_dim(&self) -> usize {
        self.layer1.in_dim()
    }

    pub fn pooled_dim(&self) -> usize {
        self.pooling.output_dim(self.layer2.out_dim())
    }

    pub fn output_dim(&self) -> usize {
        self.head.out_dim()
    }

    pub fn params(&self) -> [&[f64]; 6] {
        [
            self.layer1.weight.data(),
            &self.layer1.bias,
            self.layer2.weight.data(),
            &self.layer2.bias,
            self.head.weight.data(),
            &self.head.bias,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.layer1.weight.data_mut(),
            &mut self.layer1.bias,
            self.layer2.weight.data_mut(),
            &mut self.layer2.bias,
            self.head.weight.data_mut(),
            &mut self.head.bias,
        ]
    }

    pub fn param_sizes(&self) -> [usize; 6] {
        self.params().map(|p| p.len())
    }

    pub fn flatten_params(&self) -> Vec<f64> {
        self.params().concat()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let total: usize = self.param_sizes().iter().sum();
        if flat.len() != total {
            return Err(Error::dim("set_flat_params", total, flat.len()));
        }
        let mut cursor = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.copy_from_slice(&flat[cursor..cursor + n]);
            cursor += n;
        }
        Ok(())
    }

    /// Applies the configured frame normalisation to raw features.
    pub fn prepare(&self, h: &FeatureSequence) -> FeatureSequence {
        apply_normalization(h, self.normalize)
    }

    fn check_inputs(&self, seqs: &[&FeatureSequence]) -> Result<()> {
        if seqs.is_empty() {
            return Err(Error::EmptyInput("forward pass on an empty batch"));
        }
        for s in seqs {
            if s.rows() == 0 {
                return Err(Error::EmptyInput("sequence with zero frames"));
            }
            if s.cols() != self.input_dim() {
                return Err(Error::dim("AdaptorNet input", self.input_dim(), s.cols()));
            }
        }
        Ok(())
    }

    /// Forward pass over already-normalised sequences. Dropout is active iff `rng` is given.
    pub fn forward(&self, seqs: &[&FeatureSequence], mut rng: Option<&mut dyn RngCore>) -> Result<ForwardCache> {
        self.check_inputs(seqs)?;
        let mut offsets = Vec::with_capacity(seqs.len() + 1);
        offsets.push(0);
        for s in seqs {
            offsets.push(offsets.last().unwrap() + s.rows());
        }
        let x = Matrix::vstack(seqs.iter().copied())?;
        let training = rng.is_some();

        let pre1 = linear_forward(&self.layer1, &x)?;
        let (h1, mask1) = match rng.as_deref_mut() {
            Some(r) => dropout(&relu(&pre1), self.dropout, r, training)?,
            None => (relu(&pre1), DropoutMask(None)),
        };
        let pre2 = linear_forward(&self.layer2, &h1)?;
        let (h2, mask2) = match rng {
            Some(r) => dropout(&relu(&pre2), self.dropout, r, training)?,
            None => (relu(&pre2), DropoutMask(None)),
        };

        let pdim = self.pooled_dim();
        let mut pooled = Matrix::zeros(seqs.len(), pdim);
        for i in 0..seqs.len() {
            let seg = h2.slice_rows(offsets[i], offsets[i + 1]);
            pooled.row_mut(i).copy_from_slice(&stats_pool(&seg, self.pooling)?);
        }
        let raw = linear_forward(&self.head, &pooled)?;
        let output = if self.head_kind == HeadKind::Projection && self.normalize_embeddings {
            l2_normalize_rows(&raw)
        } else {
            raw.clone()
        };
        Ok(ForwardCache {
            offsets,
            x,
            pre1,
            mask1,
            h1,
            pre2,
            mask2,
            h2,
            pooled,
            raw,
            output,
        })
    }

    /// Backward pass for upstream gradient `dout` (same shape as the output).
    pub fn backward(&self, cache: &ForwardCache, dout: &Matrix) -> Result<NetGrads> {
        if dout.shape() != cache.output.shape() {
            return Err(Error::dim(
                "AdaptorNet::backward",
                format!("{:?}", cache.output.shape()),
                format!("{:?}", dout.shape()),
            ));
        }
        let draw = if self.head_kind == HeadKind::Projection && self.normalize_embeddings {
            l2_normalize_rows_backward(&cache.raw, &cache.output, dout)
        } else {
            dout.clone()
        };
        let (dpooled, head) = linear_backward(&self.head, &cache.pooled, &draw)?;

        let mut dh2 = Matrix::zeros(cache.h2.rows(), cache.h2.cols());
        for i in 0..cache.offsets.len() - 1 {
            let (a, b) = (cache.offsets[i], cache.offsets[i + 1]);
            let seg = cache.h2.slice_rows(a, b);
            let g = stats_pool_backward(&seg, cache.pooled.row(i), dpooled.row(i), self.pooling)?;
            dh2.data_mut()[a * seg.cols()..b * seg.cols()].copy_from_slice(g.data());
        }
        let dpre2 = relu_backward(&cache.pre2, &cache.mask2.apply(&dh2));
        let (dh1, layer2) = linear_backward(&self.layer2, &cache.h1, &dpre2)?;
        let dpre1 = relu_backward(&cache.pre1, &cache.mask1.apply(&dh1));
        let (_, layer1) = linear_backward(&self.layer1, &cache.x, &dpre1)?;
        Ok(NetGrads { layer1, layer2, head })
    }

    /// Eval-mode outputs for raw (unnormalised) sequences, processed in chunks.
    pub fn infer(&self, raw: &[&FeatureSequence]) -> Result<Matrix> {
        self.infer_with(raw, |c| c.output().clone())
    }

    /// Eval-mode post-pooling vectors for raw sequences.
    pub fn pooled_embeddings(&self, raw: &[&FeatureSequence]) -> Result<Matrix> {
        self.infer_with(raw, |c| c.pooled().clone())
    }

    fn infer_with(&self, raw: &[&FeatureSequence], pick: impl Fn(&ForwardCache) -> Matrix) -> Result<Matrix> {
        const CHUNK: usize = 64;
        let mut parts = Vec::with_capacity(raw.len() / CHUNK + 1);
        for chunk in raw.chunks(CHUNK) {
            let prepared: Vec<FeatureSequence> = chunk.iter().map(|h| self.prepare(h)).collect();
            let refs: Vec<&FeatureSequence> = prepared.iter().collect();
            parts.push(pick(&self.forward(&refs, None)?));
        }
        Matrix::vstack(parts.iter())
    }

    /// Eval-mode embedding of a single view (projection head).
    pub fn project(&self, view: &FeatureSequence) -> Result<Vec<f64>> {
        if self.head_kind != HeadKind::Projection {
            return Err(Error::Precondition("project requires a projection head".into()));
        }
        Ok(self.infer(&[view])?.into_vec())
    }
}

pub fn l2_normalize_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}

fn l2_normalize_rows_backward(raw: &Matrix, normed: &Matrix, dout: &Matrix) -> Matrix {
    let mut du = Matrix::zeros(raw.rows(), raw.cols());
    for r in 0..raw.rows() {
        let norm = raw.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let y = normed.row(r);
        let g = dout.row(r);
        let proj: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
        for ((d, yv), gv) in du.row_mut(r).iter_mut().zip(y).zip(g) {
            *d = (gv - yv * proj) / norm;
        }
    }
    du
}
