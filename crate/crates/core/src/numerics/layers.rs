use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{matmul_nn, matmul_nt, matmul_tn_acc, Matrix};
use crate::error::{Error, Result};

/// Affine layer `y = x·Wᵀ + b` with `W` stored out×in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrad {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::dim("Linear::new bias", weight.rows(), bias.len()));
        }
        Ok(Self { weight, bias })
    }

    /// Uniform init in ±√(1/fan_in) for weights and biases.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = (1.0 / in_dim.max(1) as f64).sqrt();
        let weight = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let bias = (0..out_dim).map(|_| rng.random_range(-bound..bound)).collect();
        Self {
            weight: Matrix::from_vec(out_dim, in_dim, weight).expect("sized by construction"),
            bias,
        }
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn zero_grad(&self) -> LinearGrad {
        LinearGrad {
            weight: Matrix::zeros(self.out_dim(), self.in_dim()),
            bias: vec![0.0; self.out_dim()],
        }
    }
}

impl LinearGrad {
    pub fn add_assign(&mut self, other: &LinearGrad) {
        for (a, b) in self.weight.data_mut().iter_mut().zip(other.weight.data()) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }
}

pub fn linear_forward(params: &Linear, x: &Matrix) -> Result<Matrix> {
    if x.cols() != params.in_dim() {
        return Err(Error::dim("linear_forward", params.in_dim(), x.cols()));
    }
    let mut y = matmul_nt(x, &params.weight)?;
    for r in 0..y.rows() {
        for (v, b) in y.row_mut(r).iter_mut().zip(&params.bias) {
            *v += b;
        }
    }
    Ok(y)
}

/// Returns `(dL/dx, dL/dW, dL/db)` for upstream gradient `dy`.
pub fn linear_backward(params: &Linear, x: &Matrix, dy: &Matrix) -> Result<(Matrix, LinearGrad)> {
    if dy.cols() != params.out_dim() || dy.rows() != x.rows() {
        return Err(Error::dim(
            "linear_backward",
            format!("{}x{}", x.rows(), params.out_dim()),
            format!("{}x{}", dy.rows(), dy.cols()),
        ));
    }
    let dx = matmul_nn(dy, &params.weight)?;
    let mut grad = params.zero_grad();
    matmul_tn_acc(dy, x, &mut grad.weight)?;
    for row in dy.row_iter() {
        for (g, d) in grad.bias.iter_mut().zip(row) {
            *g += d;
        }
    }
    Ok((dx, grad))
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Gradient passes only where the pre-activation was strictly positive.
pub fn relu_backward(pre: &Matrix, dy: &Matrix) -> Matrix {
    let mut dx = dy.clone();
    for (d, &p) in dx.data_mut().iter_mut().zip(pre.data()) {
        if p <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

/// Inverted-dropout mask: each entry is 0 or 1/(1-p).
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask(pub Option<Vec<f64>>);

impl DropoutMask {
    pub fn apply(&self, dy: &Matrix) -> Matrix {
        match &self.0 {
            None => dy.clone(),
            Some(mask) => {
                let mut out = dy.clone();
                for (d, m) in out.data_mut().iter_mut().zip(mask) {
                    *d *= m;
                }
                out
            }
        }
    }
}

pub fn validate_dropout(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Parameter(format!("dropout probability {p} outside [0, 1)")));
    }
    Ok(())
}

pub fn dropout<R: Rng + ?Sized>(
    x: &Matrix,
    p: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Matrix, DropoutMask)> {
    validate_dropout(p)?;
    if !training || p == 0.0 {
        return Ok((x.clone(), DropoutMask(None)));
    }
    let scale = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..x.data().len())
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { scale })
        .collect();
    let mut y = x.clone();
    for (v, m) in y.data_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    Ok((y, DropoutMask(Some(mask))))
}

/// Temporal pooling variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMode {
    /// Per-dimension mean concatenated with per-dimension standard deviation.
    #[default]
    MeanStd,
    MeanOnly,
}

impl PoolingMode {
    pub fn output_dim(self, d: usize) -> usize {
        match self {
            PoolingMode::MeanStd => 2 * d,
            PoolingMode::MeanOnly => d,
        }
    }
}

/// Lower bound on the std divisor in the backward pass; only (near-)constant
/// columns ever reach it, and their centred values are ~0 anyway.
pub const STD_GRAD_FLOOR: f64 = 1e-8;

/// Statistics pooling over the time axis. Std uses the population divisor T.
pub fn stats_pool(h: &Matrix, mode: PoolingMode) -> Result<Vec<f64>> {
    let (t, d) = h.shape();
    if t == 0 {
        return Err(Error::EmptyInput("stats_pool requires at least one frame"));
    }
    let inv_t = 1.0 / t as f64;
    let mut mean = vec![0.0; d];
    for row in h.row_iter() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m *= inv_t);
    if mode == PoolingMode::MeanOnly {
        return Ok(mean);
    }
    let mut var = vec![0.0; d];
    for row in h.row_iter() {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let c = v - m;
            *s += c * c;
        }
    }
    let mut out = mean;
    out.extend(var.into_iter().map(|s| (s * inv_t).sqrt()));
    Ok(out)
}

/// Backward pass of [`stats_pool`]; `pooled` is the forward output.
pub fn stats_pool_backward(h: &Matrix, pooled: &[f64], dout: &[f64], mode: PoolingMode) -> Result<Matrix> {
    let (t, d) = h.shape();
    if t == 0 {
        return Err(Error::EmptyInput("stats_pool requires at least one frame"));
    }
    let expect = mode.output_dim(d);
    if pooled.len() != expect || dout.len() != expect {
        return Err(Error::dim("stats_pool_backward", expect, dout.len()));
    }
    let inv_t = 1.0 / t as f64;
    let mean = &pooled[..d];
    let dmean = &dout[..d];
    let mut dh = Matrix::zeros(t, d);
    // d std_k / d h_tk = (h_tk - mean_k) / (T * std_k)
    let std_coef: Option<Vec<f64>> = (mode == PoolingMode::MeanStd).then(|| {
        let std = &pooled[d..];
        let dstd = &dout[d..];
        std.iter()
            .zip(dstd)
            .map(|(s, g)| g * inv_t / s.max(STD_GRAD_FLOOR))
            .collect()
    });
    for r in 0..t {
        let hr = h.row(r);
        let out = dh.row_mut(r);
        for k in 0..d {
            let mut g = dmean[k] * inv_t;
            if let Some(coef) = &std_coef {
                g += coef[k] * (hr[k] - mean[k]);
            }
            out[k] = g;
        }
    }
    Ok(dh)
}

/// Huber loss and its derivative w.r.t. `pred`.
pub fn huber_loss(pred: f64, target: f64, delta: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0) {
        return Err(Error::Parameter(format!("huber delta must be positive, got {delta}")));
    }
    let e = pred - target;
    if e.abs() <= delta {
        Ok((0.5 * e * e, e))
    } else {
        Ok((delta * (e.abs() - 0.5 * delta), delta * e.signum()))
    }
}
