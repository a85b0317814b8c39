//! Slow, direct reference implementations.
//!
//! Nothing here shares code with `amnet-core`; every routine is the most
//! literal nested-loop reading of its formula, operating on plain
//! `Vec<Vec<f64>>` rows (time x channels).

pub type Rows = Vec<Vec<f64>>;

/// Zero-padded 1-D convolution. `weights[o][k][c]`.
pub fn conv1d(
    input: &Rows,
    weights: &[Vec<Vec<f64>>],
    bias: &[f64],
    padding: usize,
    stride: usize,
    relu: bool,
) -> Rows {
    let t_in = input.len() as isize;
    let kernel = weights[0].len();
    let in_ch = weights[0][0].len();
    let out_len = (input.len() + 2 * padding - kernel) / stride + 1;
    let mut out = vec![vec![0.0; weights.len()]; out_len];
    for t in 0..out_len {
        for (o, w_o) in weights.iter().enumerate() {
            let mut acc = bias[o];
            for k in 0..kernel {
                let pos = (t * stride + k) as isize - padding as isize;
                if pos < 0 || pos >= t_in {
                    continue;
                }
                for c in 0..in_ch {
                    acc += w_o[k][c] * input[pos as usize][c];
                }
            }
            out[t][o] = if relu && acc < 0.0 { 0.0 } else { acc };
        }
    }
    out
}

pub fn matmul(a: &Rows, b: &Rows) -> Rows {
    let inner = b.len();
    let cols = b[0].len();
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn add(a: &Rows, b: &Rows) -> Rows {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

/// Two-pass mean and population variance.
pub fn layer_norm(x: &[f64], eps: f64) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    x.iter().map(|v| (v - mean) / (var + eps).sqrt()).collect()
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn positional_encoding(len: usize, dim: usize) -> Rows {
    (0..len)
        .map(|t| {
            (0..dim)
                .map(|j| {
                    let i = (j / 2) as f64;
                    let angle = t as f64 / 10000f64.powf(2.0 * i / dim as f64);
                    if j % 2 == 0 {
                        angle.sin()
                    } else {
                        angle.cos()
                    }
                })
                .collect()
        })
        .collect()
}

/// Scaled dot-product attention split into `heads` column groups.
/// Returns the concatenated context and the per-head weight matrices.
pub fn multi_head_attention(q: &Rows, k: &Rows, v: &Rows, heads: usize) -> (Rows, Vec<Rows>) {
    let t = q.len();
    let d = q[0].len();
    let w = d / heads;
    let mut context = vec![vec![0.0; d]; t];
    let mut all = Vec::new();
    for h in 0..heads {
        let mut weights = Vec::new();
        for i in 0..t {
            let scores: Vec<f64> = (0..t)
                .map(|j| {
                    let mut s = 0.0;
                    for c in h * w..(h + 1) * w {
                        s += q[i][c] * k[j][c];
                    }
                    s / (w as f64).sqrt()
                })
                .collect();
            let p = softmax(&scores);
            for c in h * w..(h + 1) * w {
                context[i][c] = (0..t).map(|j| p[j] * v[j][c]).sum();
            }
            weights.push(p);
        }
        all.push(weights);
    }
    (context, all)
}

/// One convolution as plain data for the composition routines below.
#[derive(Debug, Clone)]
pub struct ConvSpec {
    /// `weights[o][k][c]`.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub bias: Vec<f64>,
    pub padding: usize,
    pub relu: bool,
}

impl ConvSpec {
    pub fn apply(&self, input: &Rows) -> Rows {
        conv1d(input, &self.weights, &self.bias, self.padding, 1, self.relu)
    }
}

/// Mean over branches of `down(up(input))`.
pub fn local_conv(input: &Rows, branches: &[(ConvSpec, ConvSpec)]) -> Rows {
    let outs: Vec<Rows> = branches
        .iter()
        .map(|(up, down)| down.apply(&up.apply(input)))
        .collect();
    let n = branches.len() as f64;
    (0..input.len())
        .map(|t| {
            (0..outs[0][0].len())
                .map(|c| outs.iter().map(|o| o[t][c]).sum::<f64>() / n)
                .collect()
        })
        .collect()
}

pub fn layer_norm_rows(x: &Rows, eps: f64) -> Rows {
    x.iter().map(|row| layer_norm(row, eps)).collect()
}

/// Attention sub-layer with convolutional queries and values:
/// `LN(H + concat_heads(softmax(Q K^T / sqrt(w)) V) Wo)` where
/// `Q = lc(H; q)`, `V = lc(H; v)`, `K = H Wk`.
pub fn lc_attention(
    h: &Rows,
    q_branches: &[(ConvSpec, ConvSpec)],
    v_branches: &[(ConvSpec, ConvSpec)],
    wk: &Rows,
    wo: &Rows,
    heads: usize,
    eps: f64,
) -> (Rows, Vec<Rows>) {
    let q = local_conv(h, q_branches);
    let v = local_conv(h, v_branches);
    let k = matmul(h, wk);
    let (context, weights) = multi_head_attention(&q, &k, &v, heads);
    let out = layer_norm_rows(&add(h, &matmul(&context, wo)), eps);
    (out, weights)
}

/// `LN(H + down(relu(up(H))))`.
pub fn conv_ffn(h: &Rows, up: &ConvSpec, down: &ConvSpec, eps: f64) -> Rows {
    layer_norm_rows(&add(h, &down.apply(&up.apply(h))), eps)
}

/// `LN(sum of embedding rows + positional encoding)` per position.
pub fn embed(lookups: &[Vec<&[f64]>], eps: f64) -> Rows {
    let dim = lookups[0][0].len();
    let pe = positional_encoding(lookups.len(), dim);
    lookups
        .iter()
        .zip(&pe)
        .map(|(rows, p)| {
            let summed: Vec<f64> = (0..dim)
                .map(|c| rows.iter().map(|r| r[c]).sum::<f64>() + p[c])
                .collect();
            layer_norm(&summed, eps)
        })
        .collect()
}

/// Central differences of `f` at `x` with step `eps`.
pub fn central_difference<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let up = f(&probe);
            probe[i] = x[i] - eps;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// BMES state indices used by the path enumerator: B=0, M=1, E=2, S=3.
fn well_formed(path: &[usize]) -> bool {
    let mut inside = false;
    for &s in path {
        inside = match (inside, s) {
            (false, 3) => false,
            (false, 0) => true,
            (true, 1) => true,
            (true, 2) => false,
            _ => return false,
        };
    }
    !inside
}

/// Exhaustive search over every well-formed label path.
///
/// `emit[t][s]` is the emission log-probability of position `t` in state
/// `s`. Among paths with equal score the one whose last differing position
/// holds the smaller state index wins.
pub fn best_path(init: &[f64; 4], trans: &[[f64; 4]; 4], emit: &[[f64; 4]]) -> Vec<usize> {
    let n = emit.len();
    assert!(n > 0 && n <= 12);
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut path = vec![0usize; n];
    for code in 0..4usize.pow(n as u32) {
        let mut c = code;
        for slot in path.iter_mut() {
            *slot = c % 4;
            c /= 4;
        }
        if !well_formed(&path) {
            continue;
        }
        let mut score = init[path[0]] + emit[0][path[0]];
        for t in 1..n {
            score = score + trans[path[t - 1]][path[t]] + emit[t][path[t]];
        }
        let better = match &best {
            None => true,
            Some((s, p)) => {
                score > *s
                    || (score == *s && {
                        let last = (0..n).rev().find(|&t| path[t] != p[t]);
                        matches!(last, Some(t) if path[t] < p[t])
                    })
            }
        };
        if better {
            best = Some((score, path.clone()));
        }
    }
    best.expect("a single S per position is always well formed").1
}

/// Magnitudes of bins `0..=n/2` of the length-`n` DFT of `frame` zero-padded.
pub fn dft_magnitudes(frame: &[f64], n: usize) -> Vec<f64> {
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, &x) in frame.iter().enumerate() {
                let angle = -2.0 * std::f64::consts::PI * (k * j % n) as f64 / n as f64;
                re += x * angle.cos();
                im += x * angle.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

/// HTK-scale triangular filters, unit peak, `n_mels x (n/2 + 1)`.
pub fn triangular_filters(sr: f64, n: usize, n_mels: usize, fmin: f64, fmax: f64) -> Rows {
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let points: Vec<f64> = (0..n_mels + 2)
        .map(|i| hz(mel(fmin) + i as f64 * (mel(fmax) - mel(fmin)) / (n_mels + 1) as f64))
        .collect();
    let mut bank = vec![vec![0.0; n / 2 + 1]; n_mels];
    for (m, row) in bank.iter_mut().enumerate() {
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * sr / n as f64;
            if f > points[m] && f <= points[m + 1] {
                *w = (f - points[m]) / (points[m + 1] - points[m]);
            } else if f > points[m + 1] && f < points[m + 2] {
                *w = (points[m + 2] - f) / (points[m + 2] - points[m + 1]);
            }
        }
    }
    bank
}

/// Orthonormal DCT-II, all coefficients.
pub fn dct2_orthonormal(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    (0..x.len())
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n).cos())
                .sum();
            s * if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() }
        })
        .collect()
}

/// Periodic Hann window value.
pub fn hann(i: usize, len: usize) -> f64 {
    let x = std::f64::consts::PI * i as f64 / len as f64;
    x.sin() * x.sin()
}
