use super::conv::{conv1d_backward, Activation, Conv1dLayer};
use super::{Matrix, NnError, XorShift64Star};

/// Up-projection (relu, width `h`, padding `(h-1)/2`) followed by a 1x1
/// identity down-projection back to the model width.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalConvBranch {
    pub up: Conv1dLayer,
    pub down: Conv1dLayer,
}

impl LocalConvBranch {
    pub fn new(up: Conv1dLayer, down: Conv1dLayer) -> Result<Self, NnError> {
        let invalid = |m: String| Err(NnError::InvalidLayer(m));
        if up.kernel % 2 == 0 || 2 * up.padding != up.kernel - 1 {
            return invalid(format!(
                "kernel {} with padding {} does not preserve length",
                up.kernel, up.padding
            ));
        }
        if up.stride != 1 || down.stride != 1 {
            return invalid("local convolution layers use stride 1".into());
        }
        if down.kernel != 1 || down.padding != 0 {
            return invalid("down-projection must be a 1x1 convolution".into());
        }
        if up.out_ch != down.in_ch || down.out_ch != up.in_ch {
            return invalid(format!(
                "branch widths {}->{}->{}->{} do not close",
                up.in_ch, up.out_ch, down.in_ch, down.out_ch
            ));
        }
        if up.activation != Activation::Relu || down.activation != Activation::Identity {
            return invalid("up-projection must use relu and down-projection identity".into());
        }
        Ok(LocalConvBranch { up, down })
    }

    pub fn init(model_dim: usize, hidden: usize, kernel: usize, rng: &mut XorShift64Star) -> Self {
        let up = Conv1dLayer::init(model_dim, hidden, kernel, (kernel - 1) / 2, Activation::Relu, rng);
        let down = Conv1dLayer::init(hidden, model_dim, 1, 0, Activation::Identity, rng);
        LocalConvBranch::new(up, down).expect("odd kernel gives a valid branch")
    }

    pub fn forward(&self, input: &Matrix) -> Result<Matrix, NnError> {
        self.down.forward(&self.up.forward(input)?)
    }
}

/// Parallel local-convolution branches whose outputs are averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalConvModule {
    branches: Vec<LocalConvBranch>,
}

/// Kernel widths of the default three-branch configuration.
pub const DEFAULT_KERNELS: [usize; 3] = [9, 5, 3];
/// Single-branch variant with only the width-9 filter.
pub const SINGLE_KERNEL: [usize; 1] = [9];

impl LocalConvModule {
    pub fn new(branches: Vec<LocalConvBranch>) -> Result<Self, NnError> {
        let Some(first) = branches.first() else {
            return Err(NnError::InvalidLayer("at least one branch is required".into()));
        };
        let dim = first.up.in_ch;
        if branches.iter().any(|b| b.up.in_ch != dim) {
            return Err(NnError::InvalidLayer("branches disagree on model width".into()));
        }
        Ok(LocalConvModule { branches })
    }

    /// Seeded module with one branch per kernel width, initialized in order.
    pub fn init(
        model_dim: usize,
        hidden: usize,
        kernels: &[usize],
        rng: &mut XorShift64Star,
    ) -> Result<Self, NnError> {
        if let Some(k) = kernels.iter().find(|k| *k % 2 == 0) {
            return Err(NnError::InvalidLayer(format!("kernel {k} must be odd")));
        }
        let branches = kernels
            .iter()
            .map(|&k| LocalConvBranch::init(model_dim, hidden, k, rng))
            .collect();
        LocalConvModule::new(branches)
    }

    /// The 256 -> 1024 -> 256 module with kernels 9, 5 and 3.
    pub fn standard(rng: &mut XorShift64Star) -> Self {
        LocalConvModule::init(256, 1024, &DEFAULT_KERNELS, rng).expect("standard config is valid")
    }

    pub fn branches(&self) -> &[LocalConvBranch] {
        &self.branches
    }

    pub fn branches_mut(&mut self) -> &mut [LocalConvBranch] {
        &mut self.branches
    }

    pub fn model_dim(&self) -> usize {
        self.branches[0].up.in_ch
    }

    fn check(&self, input: &Matrix) -> Result<(), NnError> {
        if input.cols() != self.model_dim() {
            return Err(NnError::ChannelMismatch {
                expected: self.model_dim(),
                got: input.cols(),
            });
        }
        if input.rows() == 0 {
            return Err(NnError::Shape("empty input sequence".into()));
        }
        Ok(())
    }

    /// Mean of the branch outputs; same shape as the input.
    pub fn forward(&self, input: &Matrix) -> Result<Matrix, NnError> {
        self.check(input)?;
        let mut acc = Matrix::zeros(input.rows(), input.cols());
        for branch in &self.branches {
            acc = acc.add(&branch.forward(input)?)?;
        }
        Ok(acc.scale(1.0 / self.branches.len() as f64))
    }

    /// Gradients of `L = 0.5 * ||forward(input)||^2` with respect to every
    /// parameter and the input.
    pub fn gradient(&self, input: &Matrix) -> Result<LocalConvGrads, NnError> {
        self.check(input)?;
        struct Cache {
            up_pre: Matrix,
            hidden: Matrix,
        }
        let mut caches = Vec::with_capacity(self.branches.len());
        let mut acc = Matrix::zeros(input.rows(), input.cols());
        for branch in &self.branches {
            let up_pre = branch.up.forward_pre_activation(input)?;
            let hidden = Matrix::from_raw(
                up_pre.rows(),
                up_pre.cols(),
                up_pre.data().iter().map(|&v| Activation::Relu.apply(v)).collect(),
            );
            acc = acc.add(&branch.down.forward(&hidden)?)?;
            caches.push(Cache { up_pre, hidden });
        }
        let n = self.branches.len() as f64;
        let output = acc.scale(1.0 / n);
        let loss = 0.5 * output.data().iter().map(|v| v * v).sum::<f64>();

        // dL/dO = O, and each branch output enters O with weight 1/n.
        let grad_branch = output.scale(1.0 / n);
        let mut grad_input = Matrix::zeros(input.rows(), input.cols());
        let mut branches = Vec::with_capacity(self.branches.len());
        for (branch, cache) in self.branches.iter().zip(&caches) {
            let down_pre = branch.down.forward_pre_activation(&cache.hidden)?;
            let down = conv1d_backward(&branch.down, &cache.hidden, &down_pre, &grad_branch)?;
            let up = conv1d_backward(&branch.up, input, &cache.up_pre, &down.input)?;
            grad_input = grad_input.add(&up.input)?;
            branches.push(BranchGrads {
                up_weights: up.weights,
                up_bias: up.bias,
                down_weights: down.weights,
                down_bias: down.bias,
            });
        }
        Ok(LocalConvGrads {
            loss,
            output,
            branches,
            input: grad_input,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchGrads {
    pub up_weights: Vec<f64>,
    pub up_bias: Vec<f64>,
    pub down_weights: Vec<f64>,
    pub down_bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalConvGrads {
    pub loss: f64,
    pub output: Matrix,
    pub branches: Vec<BranchGrads>,
    pub input: Matrix,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_shapes() {
        let mut rng = XorShift64Star::new(3);
        let module = LocalConvModule::standard(&mut rng);
        let kernels: Vec<(usize, usize)> = module
            .branches()
            .iter()
            .map(|b| (b.up.kernel, b.up.padding))
            .collect();
        assert_eq!(kernels, [(9, 4), (5, 2), (3, 1)]);
        for b in module.branches() {
            assert_eq!((b.up.in_ch, b.up.out_ch), (256, 1024));
            assert_eq!((b.down.in_ch, b.down.out_ch, b.down.kernel), (1024, 256, 1));
        }
        let x = Matrix::from_fn(7, 256, |r, c| ((r * 31 + c) % 17) as f64 / 17.0 - 0.5);
        assert_eq!(module.forward(&x).unwrap().shape(), (7, 256));
        assert!(matches!(
            module.forward(&Matrix::zeros(3, 8)),
            Err(NnError::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let mut rng = XorShift64Star::new(4);
        let mut module = LocalConvModule::init(6, 10, &DEFAULT_KERNELS, &mut rng).unwrap();
        for b in module.branches_mut() {
            b.up.bias.fill(0.0);
            b.down.bias.fill(0.0);
        }
        let out = module.forward(&Matrix::zeros(5, 6)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
        let grads = module.gradient(&Matrix::zeros(5, 6)).unwrap();
        assert!(grads.input.data().iter().all(|&v| v == 0.0));
        for b in &grads.branches {
            assert!(b.up_weights.iter().chain(&b.down_weights).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn rejects_even_kernels_and_bad_padding() {
        let mut rng = XorShift64Star::new(5);
        assert!(LocalConvModule::init(4, 8, &[4], &mut rng).is_err());
        let up = Conv1dLayer::init(4, 8, 5, 1, Activation::Relu, &mut rng);
        let down = Conv1dLayer::init(8, 4, 1, 0, Activation::Identity, &mut rng);
        assert!(LocalConvBranch::new(up, down).is_err());
        assert!(LocalConvModule::new(vec![]).is_err());
    }

    #[test]
    fn single_scalar_closed_form() {
        // One channel, width-1 kernels: O = w2 * relu(w1 x + b1) + b2.
        let up = Conv1dLayer::new(1, 1, 1, 0, 1, Activation::Relu, vec![1.5], vec![0.25]).unwrap();
        let down = Conv1dLayer::new(1, 1, 1, 0, 1, Activation::Identity, vec![-2.0], vec![0.5]).unwrap();
        let module = LocalConvModule::new(vec![LocalConvBranch::new(up, down).unwrap()]).unwrap();
        let x = 0.5;
        let h = 1.5 * x + 0.25; // 1.0
        let o = -2.0 * h + 0.5; // -1.5
        let g = module.gradient(&Matrix::new(1, 1, vec![x]).unwrap()).unwrap();
        assert_eq!(g.output.data(), &[o]);
        assert_eq!(g.loss, 0.5 * o * o);
        let b = &g.branches[0];
        assert_eq!(b.down_weights, [o * h]);
        assert_eq!(b.down_bias, [o]);
        assert_eq!(b.up_weights, [o * -2.0 * x]);
        assert_eq!(b.up_bias, [o * -2.0]);
        assert_eq!(g.input.data(), &[o * -2.0 * 1.5]);
    }
}
