//! Deterministic forward-only encoder.
//!
//! Input rows are layer-normalized sums of phoneme, tone and phrase-label
//! embeddings plus a sinusoidal position code. Each block runs attention
//! whose queries and values come from local-convolution feature maps and
//! whose keys come from a linear projection, followed by a convolutional
//! feed-forward layer. Both sub-layers are residual and post-normalized.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::nn::{
    layer_norm_rows, sinusoidal_pe, softmax, Activation, Conv1dLayer, LayerNorm,
    LocalConvModule, Matrix, NnError, XorShift64Star, DEFAULT_KERNELS,
};
use crate::pinyin::{PhonemeToneSeq, SyllableRow, INITIALS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncoderError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("length mismatch: {phonemes} phonemes, {tones} tones, {labels} labels")]
    LengthMismatch {
        phonemes: usize,
        tones: usize,
        labels: usize,
    },
    #[error("empty input sequence")]
    EmptyInput,
    #[error("unknown phoneme {0:?}")]
    UnknownPhoneme(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

pub const TONE_VOCAB: usize = 6;
/// Code 0 is reserved; 1..=4 are S, B, M, E.
pub const LABEL_VOCAB: usize = 5;

/// Phoneme symbol to embedding index. Index 0 is reserved for padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeVocab {
    symbols: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl PhonemeVocab {
    pub const PAD: &'static str = "<pad>";

    /// The padding symbol, the 23 initials in table order, then every final
    /// of the syllable table in sorted order.
    pub fn from_table(rows: &[SyllableRow]) -> Self {
        let mut symbols = vec![Self::PAD.to_string()];
        symbols.extend(INITIALS.iter().map(|s| s.to_string()));
        let mut finals: Vec<&str> = rows.iter().map(|r| r.final_.as_str()).collect();
        finals.sort_unstable();
        finals.dedup();
        symbols.extend(finals.into_iter().map(str::to_string));
        let index = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        PhonemeVocab { symbols, index }
    }

    pub fn standard() -> Self {
        Self::from_table(&crate::pinyin::syllable_table())
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn index(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub vocab_size: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
}

impl EmbeddingTable {
    pub fn init(vocab_size: usize, dim: usize, rng: &mut XorShift64Star) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        EmbeddingTable {
            vocab_size,
            dim,
            weights: rng.fill_uniform(vocab_size * dim, bound),
        }
    }

    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        EmbeddingTable {
            vocab_size,
            dim,
            weights: vec![0.0; vocab_size * dim],
        }
    }

    pub fn lookup(&self, index: usize) -> Result<&[f64], NnError> {
        if index >= self.vocab_size {
            return Err(NnError::IndexOutOfRange {
                index,
                size: self.vocab_size,
            });
        }
        Ok(&self.weights[index * self.dim..(index + 1) * self.dim])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub heads: usize,
    pub blocks: usize,
    pub ffn_hidden: usize,
    /// Kernel widths of the feed-forward up and down convolutions.
    pub ffn_kernels: (usize, usize),
    /// Kernel widths of the local-convolution branches.
    pub lc_kernels: Vec<usize>,
    pub lc_hidden: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d_model: 256,
            heads: 2,
            blocks: 4,
            ffn_hidden: 1024,
            ffn_kernels: (9, 1),
            lc_kernels: DEFAULT_KERNELS.to_vec(),
            lc_hidden: 1024,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |m: String| Err(EncoderError::InvalidConfig(m));
        if self.d_model == 0 || self.heads == 0 || self.ffn_hidden == 0 || self.lc_hidden == 0 {
            return bad("dimensions must be positive".into());
        }
        if self.d_model % self.heads != 0 {
            return bad(format!("d_model {} not divisible by {} heads", self.d_model, self.heads));
        }
        if self.d_model % 2 != 0 {
            return bad("d_model must be even for positional encoding".into());
        }
        let (up, down) = self.ffn_kernels;
        if up % 2 == 0 || down % 2 == 0 {
            return bad("feed-forward kernels must be odd".into());
        }
        if self.lc_kernels.is_empty() || self.lc_kernels.iter().any(|k| k % 2 == 0) {
            return bad("local-convolution kernels must be odd and non-empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock {
    pub heads: usize,
    pub lc_q: LocalConvModule,
    pub lc_v: LocalConvModule,
    /// `d_model x d_model`, applied as `H * k_projection`.
    pub k_projection: Matrix,
    pub output_projection: Matrix,
    pub ffn_up: Conv1dLayer,
    pub ffn_down: Conv1dLayer,
    pub attn_norm: LayerNorm,
    pub ffn_norm: LayerNorm,
}

fn init_linear(dim: usize, rng: &mut XorShift64Star) -> Matrix {
    let bound = 1.0 / (dim as f64).sqrt();
    Matrix::new(dim, dim, rng.fill_uniform(dim * dim, bound)).expect("finite init")
}

/// Result of one attention sub-layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub output: Matrix,
    /// One `T x T` row-stochastic matrix per head.
    pub weights: Vec<Matrix>,
}

impl EncoderBlock {
    pub fn init(config: &EncoderConfig, rng: &mut XorShift64Star) -> Result<Self, EncoderError> {
        let d = config.d_model;
        let lc_q = LocalConvModule::init(d, config.lc_hidden, &config.lc_kernels, rng)?;
        let lc_v = LocalConvModule::init(d, config.lc_hidden, &config.lc_kernels, rng)?;
        let k_projection = init_linear(d, rng);
        let output_projection = init_linear(d, rng);
        let (k_up, k_down) = config.ffn_kernels;
        let ffn_up = Conv1dLayer::init(d, config.ffn_hidden, k_up, (k_up - 1) / 2, Activation::Relu, rng);
        let ffn_down = Conv1dLayer::init(
            config.ffn_hidden,
            d,
            k_down,
            (k_down - 1) / 2,
            Activation::Identity,
            rng,
        );
        Ok(EncoderBlock {
            heads: config.heads,
            lc_q,
            lc_v,
            k_projection,
            output_projection,
            ffn_up,
            ffn_down,
            attn_norm: LayerNorm::identity(d),
            ffn_norm: LayerNorm::identity(d),
        })
    }

    pub fn d_model(&self) -> usize {
        self.k_projection.rows()
    }

    /// Multi-head attention with local-convolution queries and values,
    /// followed by the output projection, a residual add and layer norm.
    pub fn lc_attention(&self, h: &Matrix) -> Result<AttentionOutput, EncoderError> {
        let d = self.d_model();
        if h.cols() != d {
            return Err(NnError::ChannelMismatch { expected: d, got: h.cols() }.into());
        }
        let q = self.lc_q.forward(h)?;
        let v = self.lc_v.forward(h)?;
        let k = h.matmul(&self.k_projection)?;
        let t = h.rows();
        let width = d / self.heads;
        let scale = 1.0 / (width as f64).sqrt();
        let mut context = vec![0.0; t * d];
        let mut weights = Vec::with_capacity(self.heads);
        for head in 0..self.heads {
            let cols = head * width..(head + 1) * width;
            let mut probs = Vec::with_capacity(t * t);
            for i in 0..t {
                let qi = &q.row(i)[cols.clone()];
                let scores: Vec<f64> = (0..t)
                    .map(|j| crate::nn::dot(qi, &k.row(j)[cols.clone()]) * scale)
                    .collect();
                let p = softmax(&scores);
                let dst = &mut context[i * d + cols.start..i * d + cols.end];
                for (j, &pj) in p.iter().enumerate() {
                    for (c, &vj) in dst.iter_mut().zip(&v.row(j)[cols.clone()]) {
                        *c += pj * vj;
                    }
                }
                probs.extend(p);
            }
            weights.push(Matrix::new(t, t, probs)?);
        }
        let context = Matrix::new(t, d, context)?;
        let projected = context.matmul(&self.output_projection)?;
        let output = self.attn_norm.forward(&h.add(&projected)?)?;
        Ok(AttentionOutput { output, weights })
    }

    /// Convolutional feed-forward sub-layer with residual and layer norm.
    pub fn feed_forward(&self, h: &Matrix) -> Result<Matrix, EncoderError> {
        let inner = self.ffn_down.forward(&self.ffn_up.forward(h)?)?;
        Ok(self.ffn_norm.forward(&h.add(&inner)?)?)
    }

    pub fn forward(&self, h: &Matrix) -> Result<Matrix, EncoderError> {
        let attn = self.lc_attention(h)?;
        self.feed_forward(&attn.output)
    }
}

/// Index sequences fed to the embedding tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderInput {
    pub phoneme_ids: Vec<usize>,
    pub tones: Vec<u8>,
    pub labels: Vec<u8>,
}

impl EncoderInput {
    pub fn new(
        seq: &PhonemeToneSeq,
        phoneme_level_numeric: &[u8],
        vocab: &PhonemeVocab,
    ) -> Result<Self, EncoderError> {
        if seq.phonemes.len() != seq.tones.len() || seq.phonemes.len() != phoneme_level_numeric.len() {
            return Err(EncoderError::LengthMismatch {
                phonemes: seq.phonemes.len(),
                tones: seq.tones.len(),
                labels: phoneme_level_numeric.len(),
            });
        }
        let phoneme_ids = seq
            .phonemes
            .iter()
            .map(|p| vocab.index(p).ok_or_else(|| EncoderError::UnknownPhoneme(p.clone())))
            .collect::<Result<_, _>>()?;
        Ok(EncoderInput {
            phoneme_ids,
            tones: seq.tones.clone(),
            labels: phoneme_level_numeric.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.phoneme_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phoneme_ids.is_empty()
    }
}

/// The three embedding tables.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTables {
    pub phoneme: EmbeddingTable,
    pub tone: EmbeddingTable,
    pub label: EmbeddingTable,
}

/// `LN(phoneme + tone + label + pe(t))` per row, with unit gain and zero shift.
pub fn build_input(input: &EncoderInput, tables: &EmbeddingTables) -> Result<Matrix, EncoderError> {
    let t = input.len();
    if input.tones.len() != t || input.labels.len() != t {
        return Err(EncoderError::LengthMismatch {
            phonemes: t,
            tones: input.tones.len(),
            labels: input.labels.len(),
        });
    }
    if t == 0 {
        return Err(EncoderError::EmptyInput);
    }
    let d = tables.phoneme.dim;
    if tables.tone.dim != d || tables.label.dim != d {
        return Err(NnError::Shape("embedding tables disagree on width".into()).into());
    }
    let pe = sinusoidal_pe(t, d)?;
    let mut data = Vec::with_capacity(t * d);
    for i in 0..t {
        let p = tables.phoneme.lookup(input.phoneme_ids[i])?;
        let tone = tables.tone.lookup(input.tones[i] as usize)?;
        let label = tables.label.lookup(input.labels[i] as usize)?;
        data.extend((0..d).map(|c| p[c] + tone[c] + label[c] + pe.get(i, c)));
    }
    let summed = Matrix::new(t, d, data)?;
    let norm = LayerNorm::identity(d);
    Ok(layer_norm_rows(&summed, &norm.gamma, &norm.beta, norm.eps)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockTrace {
    pub attention: AttentionOutput,
    pub output: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderTrace {
    pub input: Matrix,
    pub blocks: Vec<BlockTrace>,
}

impl EncoderTrace {
    pub fn output(&self) -> &Matrix {
        self.blocks.last().map_or(&self.input, |b| &b.output)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub vocab: PhonemeVocab,
    pub tables: EmbeddingTables,
    pub blocks: Vec<EncoderBlock>,
}

impl Encoder {
    /// All parameters drawn from one generator seeded with `config.seed`, in
    /// the order: phoneme, tone and label tables, then per block `lc_q`,
    /// `lc_v`, key and output projections, feed-forward up and down.
    pub fn new(config: EncoderConfig, vocab: PhonemeVocab) -> Result<Self, EncoderError> {
        config.validate()?;
        let mut rng = XorShift64Star::new(config.seed);
        let d = config.d_model;
        let tables = EmbeddingTables {
            phoneme: EmbeddingTable::init(vocab.len(), d, &mut rng),
            tone: EmbeddingTable::init(TONE_VOCAB, d, &mut rng),
            label: EmbeddingTable::init(LABEL_VOCAB, d, &mut rng),
        };
        let blocks = (0..config.blocks)
            .map(|_| EncoderBlock::init(&config, &mut rng))
            .collect::<Result<_, _>>()?;
        Ok(Encoder {
            config,
            vocab,
            tables,
            blocks,
        })
    }

    pub fn input(
        &self,
        seq: &PhonemeToneSeq,
        phoneme_level_numeric: &[u8],
    ) -> Result<EncoderInput, EncoderError> {
        EncoderInput::new(seq, phoneme_level_numeric, &self.vocab)
    }

    pub fn forward_traced(&self, input: &EncoderInput) -> Result<EncoderTrace, EncoderError> {
        let x = build_input(input, &self.tables)?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        let mut h = x.clone();
        for block in &self.blocks {
            let attention = block.lc_attention(&h)?;
            let output = block.feed_forward(&attention.output)?;
            h = output.clone();
            blocks.push(BlockTrace { attention, output });
        }
        Ok(EncoderTrace { input: x, blocks })
    }

    pub fn forward(&self, input: &EncoderInput) -> Result<Matrix, EncoderError> {
        let mut h = build_input(input, &self.tables)?;
        for block in &self.blocks {
            h = block.forward(&h)?;
        }
        Ok(h)
    }
}

/// Build an encoder from `config` and run it on a decoupled sequence.
pub fn encoder_forward(
    seq: &PhonemeToneSeq,
    phoneme_level_numeric: &[u8],
    config: &EncoderConfig,
) -> Result<Matrix, EncoderError> {
    let encoder = Encoder::new(config.clone(), PhonemeVocab::standard())?;
    let input = encoder.input(seq, phoneme_level_numeric)?;
    encoder.forward(&input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pinyin::decouple;

    fn small_config(blocks: usize) -> EncoderConfig {
        EncoderConfig {
            d_model: 16,
            heads: 2,
            blocks,
            ffn_hidden: 24,
            lc_hidden: 20,
            seed: 7,
            ..EncoderConfig::default()
        }
    }

    fn sample_input(encoder: &Encoder) -> EncoderInput {
        let seq = decouple(&["ni3", "hao3", "a1"]).unwrap();
        encoder.input(&seq, &[2, 2, 4, 4, 1]).unwrap()
    }

    #[test]
    fn vocab_layout() {
        let vocab = PhonemeVocab::standard();
        assert_eq!(vocab.index(PhonemeVocab::PAD), Some(0));
        assert_eq!(vocab.index("b"), Some(1));
        assert_eq!(vocab.index("w"), Some(23));
        assert!(vocab.index("ao").is_some());
        assert!(vocab.index("xyz").is_none());
    }

    #[test]
    fn zero_blocks_is_input_layer() {
        let encoder = Encoder::new(small_config(0), PhonemeVocab::standard()).unwrap();
        let input = sample_input(&encoder);
        let out = encoder.forward(&input).unwrap();
        assert_eq!(out, build_input(&input, &encoder.tables).unwrap());
    }

    #[test]
    fn zero_tables_give_positional_rows() {
        let d = 16;
        let tables = EmbeddingTables {
            phoneme: EmbeddingTable::zeros(PhonemeVocab::standard().len(), d),
            tone: EmbeddingTable::zeros(TONE_VOCAB, d),
            label: EmbeddingTable::zeros(LABEL_VOCAB, d),
        };
        let input = EncoderInput {
            phoneme_ids: vec![3, 5, 7],
            tones: vec![0, 1, 5],
            labels: vec![2, 3, 4],
        };
        let out = build_input(&input, &tables).unwrap();
        let pe = sinusoidal_pe(3, d).unwrap();
        let expected = layer_norm_rows(&pe, &[1.0; 16], &[0.0; 16], crate::nn::LN_EPS).unwrap();
        assert_eq!(out, expected);
    }

    #[test]
    fn input_errors() {
        let encoder = Encoder::new(small_config(1), PhonemeVocab::standard()).unwrap();
        let seq = decouple(&["ni3"]).unwrap();
        assert!(matches!(
            encoder.input(&seq, &[1]),
            Err(EncoderError::LengthMismatch { .. })
        ));
        let bad = EncoderInput {
            phoneme_ids: vec![0],
            tones: vec![6],
            labels: vec![1],
        };
        assert!(matches!(
            encoder.forward(&bad),
            Err(EncoderError::Nn(NnError::IndexOutOfRange { index: 6, size: 6 }))
        ));
        let empty = EncoderInput {
            phoneme_ids: vec![],
            tones: vec![],
            labels: vec![],
        };
        assert_eq!(encoder.forward(&empty), Err(EncoderError::EmptyInput));
        let mut weird = seq.clone();
        weird.phonemes[1] = "zz".into();
        assert_eq!(
            encoder.input(&weird, &[1, 1]),
            Err(EncoderError::UnknownPhoneme("zz".into()))
        );
    }

    #[test]
    fn config_validation() {
        let mut c = small_config(1);
        c.heads = 3;
        assert!(c.validate().is_err());
        let mut c = small_config(1);
        c.lc_kernels = vec![4];
        assert!(c.validate().is_err());
        assert!(EncoderConfig::default().validate().is_ok());
    }

    #[test]
    fn single_position_attention_is_one() {
        let encoder = Encoder::new(small_config(1), PhonemeVocab::standard()).unwrap();
        let seq = decouple(&["a1"]).unwrap();
        let input = encoder.input(&seq, &[1]).unwrap();
        let trace = encoder.forward_traced(&input).unwrap();
        for w in &trace.blocks[0].attention.weights {
            assert_eq!(w.data(), &[1.0]);
        }
    }

    #[test]
    fn deterministic_and_shape_preserving() {
        let encoder = Encoder::new(small_config(2), PhonemeVocab::standard()).unwrap();
        let input = sample_input(&encoder);
        let a = encoder.forward(&input).unwrap();
        let again = Encoder::new(small_config(2), PhonemeVocab::standard()).unwrap();
        let b = again.forward(&input).unwrap();
        assert_eq!(a.shape(), (5, 16));
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let trace = encoder.forward_traced(&input).unwrap();
        assert_eq!(trace.output(), &a);
        for block in &trace.blocks {
            for w in &block.attention.weights {
                for row in w.row_iter() {
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
