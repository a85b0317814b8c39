#![allow(dead_code)]

use amnet_core::nn::{Activation, Conv1dLayer, LocalConvModule, Matrix, XorShift64Star};
use amnet_oracle::{ConvSpec, Rows};

pub fn random_matrix(rng: &mut XorShift64Star, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, rng.fill_uniform(rows * cols, 1.0)).unwrap()
}

pub fn to_rows(m: &Matrix) -> Rows {
    m.row_iter().map(<[f64]>::to_vec).collect()
}

pub fn conv_spec(layer: &Conv1dLayer) -> ConvSpec {
    ConvSpec {
        weights: (0..layer.out_ch)
            .map(|o| {
                (0..layer.kernel)
                    .map(|k| (0..layer.in_ch).map(|c| layer.weight(o, k, c)).collect())
                    .collect()
            })
            .collect(),
        bias: layer.bias.clone(),
        padding: layer.padding,
        relu: layer.activation == Activation::Relu,
    }
}

pub fn branch_specs(module: &LocalConvModule) -> Vec<(ConvSpec, ConvSpec)> {
    module
        .branches()
        .iter()
        .map(|b| (conv_spec(&b.up), conv_spec(&b.down)))
        .collect()
}

pub fn max_abs_diff(got: &Matrix, want: &Rows) -> f64 {
    assert_eq!(got.rows(), want.len());
    got.row_iter()
        .zip(want)
        .flat_map(|(g, w)| {
            assert_eq!(g.len(), w.len());
            g.iter().zip(w).map(|(a, b)| (a - b).abs())
        })
        .fold(0.0, f64::max)
}
