use super::kernel::{gemm_nt_acc, AlignedVec};
use super::{Matrix, NnError, XorShift64Star};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative at the pre-activation value; relu'(0) is 0.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// 1-D convolution over time with zero padding.
///
/// Weights are laid out `out_ch x kernel x in_ch`, so the slice for output
/// channel `o` and tap `k` is contiguous over input channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dLayer {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub padding: usize,
    pub stride: usize,
    pub weights: AlignedVec,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Conv1dLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        padding: usize,
        stride: usize,
        activation: Activation,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, NnError> {
        if in_ch == 0 || out_ch == 0 || kernel == 0 || stride == 0 {
            return Err(NnError::InvalidLayer(format!(
                "in_ch={in_ch} out_ch={out_ch} kernel={kernel} stride={stride} must be positive"
            )));
        }
        if weights.len() != out_ch * kernel * in_ch {
            return Err(NnError::InvalidLayer(format!(
                "expected {} weights, got {}",
                out_ch * kernel * in_ch,
                weights.len()
            )));
        }
        if bias.len() != out_ch {
            return Err(NnError::InvalidLayer(format!(
                "expected {out_ch} biases, got {}",
                bias.len()
            )));
        }
        Ok(Conv1dLayer {
            in_ch,
            out_ch,
            kernel,
            padding,
            stride,
            weights: weights.into(),
            bias,
            activation,
        })
    }

    /// Weights and biases uniform on `(-1/sqrt(fan_in), 1/sqrt(fan_in))` with
    /// `fan_in = in_ch * kernel`; weights are drawn before biases.
    pub fn init(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        padding: usize,
        activation: Activation,
        rng: &mut XorShift64Star,
    ) -> Self {
        let bound = 1.0 / ((in_ch * kernel) as f64).sqrt();
        let weights = rng.fill_uniform(out_ch * kernel * in_ch, bound);
        let bias = rng.fill_uniform(out_ch, bound);
        Conv1dLayer::new(in_ch, out_ch, kernel, padding, 1, activation, weights, bias)
            .expect("init shapes are consistent")
    }

    pub fn weight(&self, o: usize, k: usize, c: usize) -> f64 {
        self.weights[(o * self.kernel + k) * self.in_ch + c]
    }

    /// `(len + 2p - h) / s + 1`, or an error when the padded input is shorter
    /// than the kernel.
    pub fn output_len(&self, len: usize) -> Result<usize, NnError> {
        let padded = len + 2 * self.padding;
        if len == 0 || padded < self.kernel {
            return Err(NnError::NonPositiveLength {
                len,
                kernel: self.kernel,
                padding: self.padding,
            });
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    fn check_input(&self, input: &Matrix) -> Result<usize, NnError> {
        if input.cols() != self.in_ch {
            return Err(NnError::ChannelMismatch {
                expected: self.in_ch,
                got: input.cols(),
            });
        }
        self.output_len(input.rows())
    }

    /// `o_t = sum_k W_k . A[t*s + k - p] + b` before the activation.
    ///
    /// The receptive field of every output step is gathered into one row of
    /// a `out_len x (kernel * in_ch)` patch matrix (zeros where the window
    /// hangs over either end), which then meets the weights in a single GEMM.
    pub fn forward_pre_activation(&self, input: &Matrix) -> Result<Matrix, NnError> {
        let out_len = self.check_input(input)?;
        let width = self.kernel * self.in_ch;
        let mut patches = AlignedVec::zeros(out_len * width);
        for (t, patch) in patches.chunks_exact_mut(width).enumerate() {
            for k in 0..self.kernel {
                let pos = t * self.stride + k;
                if pos < self.padding || pos - self.padding >= input.rows() {
                    continue;
                }
                patch[k * self.in_ch..(k + 1) * self.in_ch]
                    .copy_from_slice(input.row(pos - self.padding));
            }
        }
        let mut out = Vec::with_capacity(out_len * self.out_ch);
        for _ in 0..out_len {
            out.extend_from_slice(&self.bias);
        }
        gemm_nt_acc(&patches, &self.weights, &mut out, out_len, self.out_ch, width);
        Ok(Matrix::from_raw(out_len, self.out_ch, out))
    }

    pub fn forward(&self, input: &Matrix) -> Result<Matrix, NnError> {
        let mut out = self.forward_pre_activation(input)?;
        if self.activation != Activation::Identity {
            for v in out.data_mut() {
                *v = self.activation.apply(*v);
            }
        }
        Ok(out)
    }
}

/// Number of valid (unpadded, stride 1) positions of a width-`kernel`
/// filter over a sequence of `seq_len` steps.
pub fn feature_count_no_padding(seq_len: usize, kernel: usize) -> Result<usize, NnError> {
    if kernel == 0 || seq_len < kernel {
        return Err(NnError::SequenceTooShort {
            len: seq_len,
            kernel,
        });
    }
    Ok(seq_len - kernel + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dGrads {
    /// Same layout as [`Conv1dLayer::weights`].
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Matrix,
}

/// Backward pass of one convolution given its input, its pre-activation
/// output and the loss gradient with respect to its (post-activation) output.
pub fn conv1d_backward(
    layer: &Conv1dLayer,
    input: &Matrix,
    pre_activation: &Matrix,
    grad_output: &Matrix,
) -> Result<Conv1dGrads, NnError> {
    let out_len = layer.check_input(input)?;
    if pre_activation.shape() != (out_len, layer.out_ch) || grad_output.shape() != pre_activation.shape() {
        return Err(NnError::Shape(format!(
            "gradient shape {:?} does not match output {:?}",
            grad_output.shape(),
            (out_len, layer.out_ch)
        )));
    }
    let grad_pre: Vec<f64> = grad_output
        .data()
        .iter()
        .zip(pre_activation.data())
        .map(|(g, z)| g * layer.activation.derivative(*z))
        .collect();

    let mut d_weights = vec![0.0; layer.weights.len()];
    let mut d_bias = vec![0.0; layer.out_ch];
    let mut d_input = vec![0.0; input.rows() * layer.in_ch];
    for t in 0..out_len {
        let g_row = &grad_pre[t * layer.out_ch..(t + 1) * layer.out_ch];
        for (db, g) in d_bias.iter_mut().zip(g_row) {
            *db += g;
        }
        for k in 0..layer.kernel {
            let pos = (t * layer.stride + k) as isize - layer.padding as isize;
            if pos < 0 || pos as usize >= input.rows() {
                continue;
            }
            let pos = pos as usize;
            let src = input.row(pos);
            let d_src = &mut d_input[pos * layer.in_ch..(pos + 1) * layer.in_ch];
            for (o, &g) in g_row.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let start = (o * layer.kernel + k) * layer.in_ch;
                let w = &layer.weights[start..start + layer.in_ch];
                let dw = &mut d_weights[start..start + layer.in_ch];
                for c in 0..layer.in_ch {
                    dw[c] += g * src[c];
                    d_src[c] += g * w[c];
                }
            }
        }
    }
    Ok(Conv1dGrads {
        weights: d_weights,
        bias: d_bias,
        input: Matrix::from_raw(input.rows(), layer.in_ch, d_input),
    })
}
