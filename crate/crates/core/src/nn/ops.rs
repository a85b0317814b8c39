use super::{Matrix, NnError};

pub const LN_EPS: f64 = 1e-5;

/// `(x - mean) / sqrt(var + eps) * gamma + beta` with the population
/// variance, accumulated in a single Welford pass.
pub fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    assert_eq!(x.len(), gamma.len());
    assert_eq!(x.len(), beta.len());
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let var = m2 / x.len() as f64;
    let inv = 1.0 / (var + eps).sqrt();
    x.iter()
        .zip(gamma.iter().zip(beta))
        .map(|(&v, (&g, &b))| (v - mean) * inv * g + b)
        .collect()
}

/// Affine parameters of a layer norm over the channel axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub eps: f64,
}

impl LayerNorm {
    /// Unit gain, zero shift.
    pub fn identity(dim: usize) -> Self {
        LayerNorm {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            eps: LN_EPS,
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix, NnError> {
        layer_norm_rows(x, &self.gamma, &self.beta, self.eps)
    }
}

pub fn layer_norm_rows(x: &Matrix, gamma: &[f64], beta: &[f64], eps: f64) -> Result<Matrix, NnError> {
    if gamma.len() != x.cols() || beta.len() != x.cols() {
        return Err(NnError::ChannelMismatch {
            expected: gamma.len(),
            got: x.cols(),
        });
    }
    let mut data = Vec::with_capacity(x.rows() * x.cols());
    for row in x.row_iter() {
        data.extend(layer_norm(row, gamma, beta, eps));
    }
    Ok(Matrix::from_raw(x.rows(), x.cols(), data))
}

/// Max-subtracted softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `pe[t, 2i] = sin(t / 10000^(2i/d))`, `pe[t, 2i+1] = cos(t / 10000^(2i/d))`.
pub fn sinusoidal_pe(len: usize, dim: usize) -> Result<Matrix, NnError> {
    if dim % 2 != 0 {
        return Err(NnError::OddDimension(dim));
    }
    let freqs: Vec<f64> = (0..dim / 2)
        .map(|i| 10000f64.powf(-((2 * i) as f64) / dim as f64))
        .collect();
    let mut data = Vec::with_capacity(len * dim);
    for t in 0..len {
        for &f in &freqs {
            let angle = t as f64 * f;
            data.push(angle.sin());
            data.push(angle.cos());
        }
    }
    Ok(Matrix::from_raw(len, dim, data))
}
