//! Oracle-backed verification suites.
//!
//! Each function runs one suite end to end against the slow reference
//! routines in `amnet_oracle` and reports a verdict with the measured
//! figures. `amnet selftest` runs [`selftest_suites`]; the acceptance tests
//! run [`criteria`] and add wall-clock bounds on top.

use amnet_core::duration::{aggregate_duration, phrase_duration_penalty, DurationVector, PhraseDurationVector};
use amnet_core::encoder::{
    build_input, EmbeddingTables, Encoder, EncoderBlock, EncoderConfig, EncoderInput, PhonemeVocab,
    LABEL_VOCAB, TONE_VOCAB,
};
use amnet_core::metrics::{
    mcd, mel_cepstra, mel_filterbank, mel_spectrogram, r_squared, yin_f0, MelCepstra, MelConfig,
    MelSpectrogram, WavAudio, YinConfig, N_CEPSTRA, SAMPLE_RATE,
};
use amnet_core::nn::{
    Activation, Conv1dLayer, LocalConvBranch, LocalConvModule, Matrix, XorShift64Star, DEFAULT_KERNELS,
    LN_EPS,
};
use amnet_core::phrase::{annotate, labels_to_numeric, viterbi, HmmModel, PhraseLabel, LEGAL_START, LEGAL_TRANS};
use amnet_core::pinyin::{decouple, recombine, syllable_table};
use amnet_oracle::{self as oracle, ConvSpec, Rows};
use regex::Regex;

/// Pinned tolerances.
pub mod tol {
    pub const CONV_ABS: f64 = 1e-12;
    pub const FD_STEP: f64 = 1e-5;
    pub const GRAD_REL: f64 = 1e-4;
    /// Gradients smaller than this are compared in absolute terms.
    pub const GRAD_FLOOR: f64 = 1e-3;
    pub const COMPOSITION_ABS: f64 = 1e-12;
    pub const YIN_REL: f64 = 0.02;
    pub const MCD_ZERO: f64 = 1e-12;
    pub const MCD_UNIT: f64 = 1e-3;
    pub const R2_ABS: f64 = 1e-12;
    pub const ATTENTION_ROW: f64 = 1e-9;
    pub const LN_MEAN: f64 = 1e-9;
    pub const LN_VAR: f64 = 1e-6;
    /// Deviation allowed from the exact post-normalization variance
    /// `s2 / (s2 + eps)`.
    pub const LN_VAR_EXACT: f64 = 1e-9;
    pub const ENCODER_ORACLE_ABS: f64 = 1e-9;
    /// Filter weights absolutely; band energies relative to the frame peak.
    pub const MEL_ABS: f64 = 1e-9;
    pub const DCT_ABS: f64 = 1e-12;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

type Check = Result<Outcome, amnet_core::Error>;

fn settle(result: Check) -> Outcome {
    result.unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")))
}

pub struct Suite {
    pub key: &'static str,
    pub run: fn() -> Outcome,
}

/// Acceptance criteria 1 to 13, in order.
pub fn criteria() -> Vec<Suite> {
    vec![
        Suite { key: "conv_oracle", run: conv_oracle },
        Suite { key: "length_preservation", run: length_preservation },
        Suite { key: "gradient_check", run: gradient_check },
        Suite { key: "local_conv_semantics", run: local_conv_semantics },
        Suite { key: "viterbi_oracle", run: viterbi_oracle },
        Suite { key: "sbme_grammar_fuzz", run: grammar_fuzz },
        Suite { key: "anchors", run: anchors },
        Suite { key: "tone_roundtrip", run: tone_roundtrip },
        Suite { key: "duration_conservation", run: duration_conservation },
        Suite { key: "yin_accuracy", run: yin_accuracy },
        Suite { key: "mcd_properties", run: mcd_properties },
        Suite { key: "r2_closed_forms", run: r2_closed_forms },
        Suite { key: "encoder_invariants", run: encoder_invariants },
    ]
}

/// Every oracle suite, including the ones that have no criterion of their
/// own. Encoder statistics are checked against the exact normalized
/// variance rather than against 1.
pub fn selftest_suites() -> Vec<Suite> {
    let mut suites: Vec<Suite> = criteria()
        .into_iter()
        .filter(|s| s.key != "encoder_invariants")
        .collect();
    suites.extend([
        Suite { key: "feature_count", run: feature_count },
        Suite { key: "encoder_oracle", run: encoder_oracle },
        Suite { key: "mel_oracle", run: mel_oracle },
        Suite { key: "cepstra_oracle", run: cepstra_oracle },
    ]);
    suites
}

// ---------------------------------------------------------------------------
// helpers

pub fn random_matrix(rng: &mut XorShift64Star, rows: usize, cols: usize, bound: f64) -> Matrix {
    Matrix::new(rows, cols, rng.fill_uniform(rows * cols, bound)).expect("finite values")
}

pub fn to_rows(m: &Matrix) -> Rows {
    m.row_iter().map(<[f64]>::to_vec).collect()
}

pub fn conv_spec(layer: &Conv1dLayer) -> ConvSpec {
    assert_eq!(layer.stride, 1, "composition oracle covers stride 1 only");
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
    if got.rows() != want.len() || want.iter().any(|r| r.len() != got.cols()) {
        return f64::INFINITY;
    }
    got.row_iter()
        .zip(want)
        .flat_map(|(g, w)| g.iter().zip(w).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}

fn row_stats(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

fn random_encoder_input(rng: &mut XorShift64Star, vocab: usize, t: usize) -> EncoderInput {
    EncoderInput {
        phoneme_ids: (0..t).map(|_| 1 + rng.below(vocab - 1)).collect(),
        tones: (0..t).map(|_| rng.below(TONE_VOCAB) as u8).collect(),
        labels: (0..t).map(|_| 1 + rng.below(LABEL_VOCAB - 1) as u8).collect(),
    }
}

pub fn sine(freq: f64, seconds: f64, amplitude: f64) -> WavAudio {
    let sr = SAMPLE_RATE as f64;
    let n = (sr * seconds).round() as usize;
    WavAudio {
        sample_rate: SAMPLE_RATE,
        samples: (0..n)
            .map(|i| amplitude * (2.0 * std::f64::consts::PI * freq * i as f64 / sr).sin())
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// 1. convolution oracle

pub fn conv_oracle() -> Outcome {
    settle((|| {
        let mut rng = XorShift64Star::new(0xC0_17);
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let kernel = [1, 3, 5, 9][rng.below(4)];
            let in_ch = 1 + rng.below(8);
            let out_ch = 1 + rng.below(8);
            let padding = rng.below(kernel);
            let stride = 1 + rng.below(3);
            let min_t = kernel.saturating_sub(2 * padding).max(1);
            let t = min_t + rng.below(32 - min_t + 1);
            let relu = rng.below(2) == 1;
            let activation = if relu { Activation::Relu } else { Activation::Identity };
            let weights = rng.fill_uniform(out_ch * kernel * in_ch, 1.0);
            let bias = rng.fill_uniform(out_ch, 1.0);
            let layer = Conv1dLayer::new(in_ch, out_ch, kernel, padding, stride, activation, weights, bias)?;
            let input = random_matrix(&mut rng, t, in_ch, 1.0);
            let got = layer.forward(&input)?;
            let spec = conv_spec(&Conv1dLayer { stride: 1, ..layer.clone() });
            let want = oracle::conv1d(&to_rows(&input), &spec.weights, &spec.bias, padding, stride, relu);
            worst = worst.max(max_abs_diff(&got, &want));
        }
        Ok(Outcome::new(
            worst < tol::CONV_ABS,
            format!("200 configs, max abs diff {worst:.3e}"),
        ))
    })())
}

pub fn feature_count() -> Outcome {
    settle((|| {
        let mut rng = XorShift64Star::new(0xFC);
        for _ in 0..100 {
            let kernel = 1 + rng.below(9);
            let len = kernel + rng.below(30);
            let layer = Conv1dLayer::init(1, 1, kernel, 0, Activation::Identity, &mut rng);
            let out = layer.forward(&Matrix::zeros(len, 1))?;
            let count = amnet_core::nn::feature_count_no_padding(len, kernel)?;
            if out.rows() != count || count != len - kernel + 1 {
                return Ok(Outcome::new(false, format!("len {len} kernel {kernel}: {} vs {count}", out.rows())));
            }
        }
        Ok(Outcome::new(true, "100 (seq_len, h) pairs agree"))
    })())
}

// ---------------------------------------------------------------------------
// 2. length preservation

pub fn length_preservation() -> Outcome {
    settle((|| {
        let mut rng = XorShift64Star::new(0x1E46);
        let module = LocalConvModule::standard(&mut rng);
        for b in module.branches() {
            let (up, down) = (&b.up, &b.down);
            let shaped = up.in_ch == 256
                && up.out_ch == 1024
                && 2 * up.padding == up.kernel - 1
                && up.activation == Activation::Relu
                && down.kernel == 1
                && down.padding == 0
                && down.out_ch == 256;
            if !shaped {
                return Ok(Outcome::new(false, format!("branch with kernel {} is misconfigured", up.kernel)));
            }
        }
        let kernels: Vec<usize> = module.branches().iter().map(|b| b.up.kernel).collect();
        for t in 1..=64 {
            let input = random_matrix(&mut rng, t, 256, 1.0);
            let out = module.forward(&input)?;
            if out.shape() != (t, 256) {
                return Ok(Outcome::new(false, format!("T={t} gave {:?}", out.shape())));
            }
        }
        Ok(Outcome::new(true, format!("kernels {kernels:?}, T=1..64 all map to Tx256")))
    })())
}

// ---------------------------------------------------------------------------
// 3. gradient check

#[derive(Clone, Copy)]
enum Param {
    UpWeights,
    UpBias,
    DownWeights,
    DownBias,
}

fn param_mut(module: &mut LocalConvModule, branch: usize, which: Param) -> &mut [f64] {
    let b = &mut module.branches_mut()[branch];
    match which {
        Param::UpWeights => &mut b.up.weights,
        Param::UpBias => &mut b.up.bias,
        Param::DownWeights => &mut b.down.weights,
        Param::DownBias => &mut b.down.bias,
    }
}

fn half_square(m: &Matrix) -> f64 {
    0.5 * m.data().iter().map(|x| x * x).sum::<f64>()
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(tol::GRAD_FLOOR))
        .fold(0.0, f64::max)
}

pub fn gradient_check() -> Outcome {
    settle((|| {
        let mut rng = XorShift64Star::new(0x6AD);
        let mut worst: f64 = 0.0;
        let mut checked = 0usize;
        for _ in 0..20 {
            let dim = 1 + rng.below(4);
            let hidden = 1 + rng.below(5);
            let kernels: Vec<usize> = (0..1 + rng.below(3)).map(|_| [1, 3, 5][rng.below(3)]).collect();
            let t = 1 + rng.below(6);
            let module = LocalConvModule::init(dim, hidden, &kernels, &mut rng)?;
            let input = random_matrix(&mut rng, t, dim, 1.0);
            let grads = module.gradient(&input)?;

            let loss_at = |m: &LocalConvModule, x: &Matrix| -> f64 {
                half_square(&m.forward(x).expect("shapes fixed"))
            };
            for (b, bg) in grads.branches.iter().enumerate() {
                for (which, analytic) in [
                    (Param::UpWeights, &bg.up_weights),
                    (Param::UpBias, &bg.up_bias),
                    (Param::DownWeights, &bg.down_weights),
                    (Param::DownBias, &bg.down_bias),
                ] {
                    let mut probe = module.clone();
                    let x0 = param_mut(&mut probe, b, which).to_vec();
                    let numeric = oracle::central_difference(
                        |x| {
                            param_mut(&mut probe, b, which).copy_from_slice(x);
                            loss_at(&probe, &input)
                        },
                        &x0,
                        tol::FD_STEP,
                    );
                    worst = worst.max(relative_error(analytic, &numeric));
                    checked += x0.len();
                }
            }
            let numeric = oracle::central_difference(
                |x| loss_at(&module, &Matrix::new(t, dim, x.to_vec()).expect("finite")),
                input.data(),
                tol::FD_STEP,
            );
            worst = worst.max(relative_error(grads.input.data(), &numeric));
            checked += input.data().len();
        }
        Ok(Outcome::new(
            worst < tol::GRAD_REL,
            format!("20 configs, {checked} partials, max relative error {worst:.3e}"),
        ))
    })())
}

// ---------------------------------------------------------------------------
// 4. local convolution semantics

pub fn local_conv_semantics() -> Outcome {
    settle((|| {
        let mut rng = XorShift64Star::new(0xE4);
        let mut notes = Vec::new();
        let mut pass = true;

        let mut zeroed = LocalConvModule::init(6, 10, &DEFAULT_KERNELS, &mut rng)?;
        for b in zeroed.branches_mut() {
            b.up.bias.iter_mut().for_each(|v| *v = 0.0);
            b.down.bias.iter_mut().for_each(|v| *v = 0.0);
        }
        let out = zeroed.forward(&Matrix::zeros(7, 6))?;
        let zero_ok = out.data().iter().all(|&v| v == 0.0);
        pass &= zero_ok;
        notes.push(format!("zero input -> zero output: {zero_ok}"));

        let branch = LocalConvBranch::init(6, 10, 5, &mut rng);
        let same = LocalConvModule::new(vec![branch.clone(), branch.clone(), branch.clone()])?;
        let input = random_matrix(&mut rng, 9, 6, 1.0);
        let single = branch.forward(&input)?;
        let d = same.forward(&input)?.max_abs_diff(&single);
        pass &= d < tol::COMPOSITION_ABS;
        notes.push(format!("equal branches vs single {d:.3e}"));

        let module = LocalConvModule::init(8, 16, &DEFAULT_KERNELS, &mut rng)?;
        let input = random_matrix(&mut rng, 11, 8, 1.0);
        let want = oracle::local_conv(&to_rows(&input), &branch_specs(&module));
        let d = max_abs_diff(&module.forward(&input)?, &want);
        pass &= d < tol::COMPOSITION_ABS;
        notes.push(format!("composition oracle {d:.3e}"));

        Ok(Outcome::new(pass, notes.join("; ")))
    })())
}

// ---------------------------------------------------------------------------
// 5. Viterbi against exhaustive search

const ALPHABET: [char; 5] = ['天', '气', '很', '好', '吗'];

fn random_model(rng: &mut XorShift64Star, integer: bool) -> HmmModel {
    let draw = |rng: &mut XorShift64Star| -> f64 {
        if integer {
            -(rng.below(3) as f64)
        } else {
            rng.uniform(0.01, 1.0).ln()
        }
    };
    let mut log_init = [f64::NEG_INFINITY; 4];
    let mut log_trans = [[f64::NEG_INFINITY; 4]; 4];
    for s in 0..4 {
        if LEGAL_START[s] {
            log_init[s] = draw(rng);
        }
        for t in 0..4 {
            if LEGAL_TRANS[s][t] {
                log_trans[s][t] = draw(rng);
            }
        }
    }
    let mut log_emit: [std::collections::BTreeMap<char, f64>; 4] = Default::default();
    for table in log_emit.iter_mut() {
        // Leave the last character out so the unknown floor is exercised.
        for &c in &ALPHABET[..ALPHABET.len() - 1] {
            table.insert(c, draw(rng));
        }
    }
    let unk_log_floor = draw(rng);
    HmmModel {
        log_init,
        log_trans,
        log_emit,
        unk_log_floor,
        smoothing: 1.0,
    }
}

pub fn viterbi_oracle() -> Outcome {
    let mut rng = XorShift64Star::new(0x5EB);
    let mut mismatches = 0;
    let mut first = String::new();
    for i in 0..500 {
        let model = random_model(&mut rng, i % 2 == 1);
        let n = 1 + rng.below(8);
        let text: Vec<char> = (0..n).map(|_| ALPHABET[rng.below(ALPHABET.len())]).collect();
        let emit: Vec<[f64; 4]> = text
            .iter()
            .map(|&c| std::array::from_fn(|s| model.emission(s, c)))
            .collect();
        let want = oracle::best_path(&model.log_init, &model.log_trans, &emit);
        let got: Vec<usize> = viterbi(&model, &text).iter().map(|l| l.state()).collect();
        if got != want {
            mismatches += 1;
            if first.is_empty() {
                first = format!("; first at model {i}: {got:?} vs {want:?}");
            }
        }
    }
    Outcome::new(
        mismatches == 0,
        format!("500 models (250 with integer log-probabilities), {mismatches} mismatches{first}"),
    )
}

// ---------------------------------------------------------------------------
// 6. SBME grammar fuzz

const FUZZ_CHARS: [char; 12] = ['我', '你', '他', '们', '是', '中', '国', '人', '好', '吗', '学', '生'];

fn random_corpus(rng: &mut XorShift64Star) -> String {
    let mut lines = Vec::new();
    for _ in 0..1 + rng.below(6) {
        let words: Vec<String> = (0..1 + rng.below(5))
            .map(|_| (0..1 + rng.below(4)).map(|_| FUZZ_CHARS[rng.below(FUZZ_CHARS.len())]).collect())
            .collect();
        lines.push(words.join(" "));
    }
    lines.join("\n")
}

fn code(label: PhraseLabel) -> u8 {
    match label.as_str() {
        "S" => 1,
        "B" => 2,
        "M" => 3,
        "E" => 4,
        other => unreachable!("label {other}"),
    }
}

pub fn grammar_fuzz() -> Outcome {
    settle((|| {
        let grammar = Regex::new("^(S|BM*E)+$").expect("valid pattern");
        let mut rng = XorShift64Star::new(0xF022);
        for i in 0..1000 {
            let model = if i % 2 == 0 {
                HmmModel::train(&random_corpus(&mut rng), rng.uniform(1e-4, 1.0))?
            } else {
                random_model(&mut rng, i % 4 == 1)
            };
            let n = 1 + rng.below(20);
            let mut text: String = (0..n).map(|_| FUZZ_CHARS[rng.below(FUZZ_CHARS.len())]).collect();
            if rng.below(3) == 0 {
                text.insert_str(rng.below(2) * text.len(), "，a1 ");
            }
            let ann = annotate(&model, &text)?;
            let labels: String = ann.labels.iter().map(|l| l.as_str()).collect();
            let codes: Vec<u8> = ann.labels.iter().map(|&l| code(l)).collect();
            if !grammar.is_match(&labels) || ann.numeric != codes || ann.labels.len() != n {
                return Ok(Outcome::new(false, format!("pair {i}: {text} -> {labels} {:?}", ann.numeric)));
            }
        }
        Ok(Outcome::new(true, "1000 pairs match (S|BM*E)+ with numeric = code(labels)"))
    })())
}

// ---------------------------------------------------------------------------
// 7. anchors

pub fn anchors() -> Outcome {
    settle((|| {
        let be = labels_to_numeric(&[PhraseLabel::B, PhraseLabel::E]);
        let s = labels_to_numeric(&[PhraseLabel::S]);
        let wo = decouple(&["wo3"])?;
        let pass = be == [2, 4] && s == [1] && wo.phonemes == ["w", "o"] && wo.tones == [0, 3];
        Ok(Outcome::new(
            pass,
            format!(
                "[B,E] -> {be:?}, [S] -> {s:?}, wo3 -> ({:?}, {:?})",
                wo.phonemes, wo.tones
            ),
        ))
    })())
}

// ---------------------------------------------------------------------------
// 8. tone roundtrip

pub fn tone_roundtrip() -> Outcome {
    settle((|| {
        let table = syllable_table();
        let mut failures = Vec::new();
        for row in &table {
            let seq = decouple(&[row.pinyin.as_str()])?;
            let back = recombine(&seq)?;
            let expected_initial = row.initial.as_deref().into_iter();
            let split_ok = seq.phonemes.iter().map(String::as_str).eq(expected_initial
                .chain(std::iter::once(row.final_.as_str())));
            if back != [row.pinyin.clone()] || !split_ok {
                failures.push(row.pinyin.clone());
            }
        }
        let all: Vec<&str> = table.iter().map(|r| r.pinyin.as_str()).collect();
        let whole = recombine(&decouple(&all)?)? == all;
        Ok(Outcome::new(
            failures.is_empty() && whole && table.len() == 50,
            format!("{} syllables, failures {failures:?}, whole-table roundtrip {whole}", table.len()),
        ))
    })())
}

// ---------------------------------------------------------------------------
// 9. duration conservation

pub fn duration_conservation() -> Outcome {
    settle((|| {
        let mut rng = XorShift64Star::new(0xD0);
        for i in 0..1000 {
            let n = 1 + rng.below(40);
            let durations = DurationVector((0..n).map(|_| rng.below(60) as u64).collect());
            let mut spans = Vec::new();
            let mut start = 0;
            while start < n {
                let len = 1 + rng.below(n - start);
                spans.push((start, len));
                start += len;
            }
            let phrases = aggregate_duration(&durations, &spans)?;
            if phrases.total() != durations.total() || phrases.0.len() != spans.len() {
                return Ok(Outcome::new(false, format!("instance {i} lost mass")));
            }
        }
        let p = phrase_duration_penalty(&PhraseDurationVector(vec![5]), &PhraseDurationVector(vec![7]))?;
        Ok(Outcome::new(p == 4.0, format!("1000 instances conserve totals; penalty([5],[7]) = {p}")))
    })())
}

// ---------------------------------------------------------------------------
// 10. YIN accuracy

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn yin_accuracy() -> Outcome {
    settle((|| {
        let cfg = YinConfig::default();
        let mut pass = true;
        let mut notes = Vec::new();
        for f in [110.0, 220.0, 440.0] {
            let track = yin_f0(&sine(f, 1.0, 0.5), &cfg)?;
            let mut voiced: Vec<f64> = track.f0.iter().copied().filter(|&v| v > 0.0).collect();
            if voiced.is_empty() {
                pass = false;
                notes.push(format!("{f} Hz: no voiced frames"));
                continue;
            }
            let m = median(&mut voiced);
            let rel = (m - f).abs() / f;
            pass &= rel <= tol::YIN_REL;
            notes.push(format!("{f} Hz -> {m:.3} ({:.2}%)", 100.0 * rel));
        }
        let silence = WavAudio {
            sample_rate: SAMPLE_RATE,
            samples: vec![0.0; SAMPLE_RATE as usize],
        };
        let track = yin_f0(&silence, &cfg)?;
        let unvoiced = track.voiced_count() == 0 && !track.f0.is_empty();
        pass &= unvoiced;
        notes.push(format!("silence voiced frames {}", track.voiced_count()));
        Ok(Outcome::new(pass, notes.join("; ")))
    })())
}

// ---------------------------------------------------------------------------
// 11. MCD properties

fn random_cepstra(rng: &mut XorShift64Star, frames: usize) -> MelCepstra {
    MelCepstra {
        frames: (0..frames)
            .map(|_| std::array::from_fn(|_| rng.uniform(-5.0, 5.0)))
            .collect(),
    }
}

pub fn mcd_properties() -> Outcome {
    settle((|| {
        let mut rng = XorShift64Star::new(0x3CD);
        let a = random_cepstra(&mut rng, 50);
        let b = random_cepstra(&mut rng, 50);
        let zero = mcd(&a, &a)?;

        let one = random_cepstra(&mut rng, 1);
        let mut bumped = one.clone();
        bumped.frames[0][4] += 1.0;
        let unit = mcd(&one, &bumped)?;
        let expected = 10.0 / std::f64::consts::LN_10 * 2f64.sqrt();

        let symmetric = mcd(&a, &b)? == mcd(&b, &a)?;

        let mut scores = Vec::new();
        for sigma in [0.01, 0.1, 1.0] {
            let mut noisy = a.clone();
            for frame in &mut noisy.frames {
                for c in frame.iter_mut() {
                    *c += sigma * rng.uniform(-1.0, 1.0) * 3f64.sqrt();
                }
            }
            scores.push(mcd(&a, &noisy)?);
        }
        let increasing = scores.windows(2).all(|w| w[0] < w[1]);

        let pass = zero < tol::MCD_ZERO && (unit - expected).abs() < tol::MCD_UNIT && symmetric && increasing;
        Ok(Outcome::new(
            pass,
            format!(
                "identical {zero:.1e}; unit step {unit:.6} (expected {expected:.6}); symmetric {symmetric}; scales 0.01/0.1/1.0 -> {:.4}/{:.4}/{:.4}",
                scores[0], scores[1], scores[2]
            ),
        ))
    })())
}

// ---------------------------------------------------------------------------
// 12. R² closed forms

pub fn r2_closed_forms() -> Outcome {
    settle((|| {
        let target = [1.0, 2.0, 3.0];
        let exact = r_squared(&target, &target)?;
        let mean = r_squared(&[2.0, 2.0, 2.0], &target)?;
        let reversed = r_squared(&[3.0, 2.0, 1.0], &target)?;
        let pass = (exact - 1.0).abs() < tol::R2_ABS
            && mean.abs() < tol::R2_ABS
            && (reversed + 3.0).abs() < tol::R2_ABS;
        Ok(Outcome::new(pass, format!("exact {exact}, mean {mean}, reversed {reversed}")))
    })())
}

// ---------------------------------------------------------------------------
// 13. encoder invariants

/// Running maxima over every layer-norm output seen.
#[derive(Default)]
struct NormStats {
    mean: f64,
    var_vs_one: f64,
    var_vs_exact: f64,
    rows: usize,
}

impl NormStats {
    fn observe(&mut self, pre: &Matrix, post: &Matrix) {
        for (p, q) in pre.row_iter().zip(post.row_iter()) {
            let (_, s2) = row_stats(p);
            let (_, var) = row_stats(q);
            self.var_vs_exact = self.var_vs_exact.max((var - s2 / (s2 + LN_EPS)).abs());
        }
        self.observe_output(post);
    }

    fn observe_output(&mut self, post: &Matrix) {
        for q in post.row_iter() {
            let (mean, var) = row_stats(q);
            self.mean = self.mean.max(mean.abs());
            self.var_vs_one = self.var_vs_one.max((var - 1.0).abs());
            self.rows += 1;
        }
    }
}

/// Pre-normalization sums of one block, recomputed from the traced
/// sub-layer outputs.
fn block_norm_inputs(block: &EncoderBlock, h: &Matrix) -> Result<(Matrix, Matrix, Matrix, Matrix), amnet_core::Error> {
    let attn = block.lc_attention(h)?;
    let q = block.lc_q.forward(h)?;
    let v = block.lc_v.forward(h)?;
    let k = h.matmul(&block.k_projection)?;
    let (context, _) = oracle::multi_head_attention(&to_rows(&q), &to_rows(&k), &to_rows(&v), block.heads);
    let context = Matrix::new(h.rows(), h.cols(), context.concat())?;
    let attn_pre = h.add(&context.matmul(&block.output_projection)?)?;
    let ffn_inner = block.ffn_down.forward(&block.ffn_up.forward(&attn.output)?)?;
    let ffn_pre = attn.output.add(&ffn_inner)?;
    let ffn_out = block.ffn_norm.forward(&ffn_pre)?;
    Ok((attn_pre, attn.output, ffn_pre, ffn_out))
}

fn attention_row_error(weights: &[Matrix]) -> f64 {
    weights
        .iter()
        .flat_map(|w| w.row_iter().map(|r| (r.iter().sum::<f64>() - 1.0).abs()))
        .fold(0.0, f64::max)
}

/// Shape sweep, attention normalization, post-norm statistics and
/// run-to-run determinism on the default configuration.
pub fn encoder_invariants() -> Outcome {
    settle((|| {
        let config = EncoderConfig::default();
        let encoder = Encoder::new(config.clone(), PhonemeVocab::standard())?;
        let mut rng = XorShift64Star::new(0xE1C);
        let mut shapes_ok = true;
        let mut attn_err: f64 = 0.0;
        let mut stats = NormStats::default();
        for t in 1..=64 {
            let input = random_encoder_input(&mut rng, encoder.vocab.len(), t);
            let trace = encoder.forward_traced(&input)?;
            let pre = embedding_sum(&input, &encoder.tables)?;
            stats.observe(&pre, &trace.input);
            let mut h = trace.input.clone();
            for (block, bt) in encoder.blocks.iter().zip(&trace.blocks) {
                shapes_ok &= bt.attention.output.shape() == (t, 256) && bt.output.shape() == (t, 256);
                attn_err = attn_err.max(attention_row_error(&bt.attention.weights));
                if t % 16 == 1 {
                    let (attn_pre, attn_out, ffn_pre, ffn_out) = block_norm_inputs(block, &h)?;
                    stats.observe(&attn_pre, &attn_out);
                    stats.observe(&ffn_pre, &ffn_out);
                } else {
                    stats.observe_output(&bt.attention.output);
                    stats.observe_output(&bt.output);
                }
                h = bt.output.clone();
            }
            shapes_ok &= trace.output().shape() == (t, 256);
        }

        let mut deterministic = true;
        for t in [1, 17, 64] {
            let input = random_encoder_input(&mut rng, encoder.vocab.len(), t);
            let a = Encoder::new(config.clone(), PhonemeVocab::standard())?.forward(&input)?;
            let b = Encoder::new(config.clone(), PhonemeVocab::standard())?.forward(&input)?;
            deterministic &= a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
        }

        let pass = shapes_ok
            && attn_err < tol::ATTENTION_ROW
            && stats.mean < tol::LN_MEAN
            && stats.var_vs_one < tol::LN_VAR
            && deterministic;
        Ok(Outcome::new(
            pass,
            format!(
                "shapes {shapes_ok}; attention row error {attn_err:.2e}; post-LN over {} rows: max |mean| {:.2e}, max |var-1| {:.3e} (exact-variance deviation {:.2e}); bitwise deterministic {deterministic}",
                stats.rows, stats.mean, stats.var_vs_one, stats.var_vs_exact
            ),
        ))
    })())
}

fn embedding_sum(input: &EncoderInput, tables: &EmbeddingTables) -> Result<Matrix, amnet_core::Error> {
    let t = input.len();
    let d = tables.phoneme.dim;
    let pe = amnet_core::nn::sinusoidal_pe(t, d)?;
    let mut data = Vec::with_capacity(t * d);
    for i in 0..t {
        let p = tables.phoneme.lookup(input.phoneme_ids[i])?;
        let tone = tables.tone.lookup(input.tones[i] as usize)?;
        let label = tables.label.lookup(input.labels[i] as usize)?;
        data.extend((0..d).map(|c| p[c] + tone[c] + label[c] + pe.get(i, c)));
    }
    Ok(Matrix::new(t, d, data)?)
}

// ---------------------------------------------------------------------------
// selftest-only suites

/// Composition oracle for the input layer and one full block, attention
/// normalization, exact post-norm statistics, determinism and shapes.
pub fn encoder_oracle() -> Outcome {
    settle((|| {
        let config = EncoderConfig {
            blocks: 2,
            seed: 11,
            ..EncoderConfig::default()
        };
        let encoder = Encoder::new(config.clone(), PhonemeVocab::standard())?;
        let mut rng = XorShift64Star::new(0x0AC1E);
        let mut worst: f64 = 0.0;
        let mut attn_err: f64 = 0.0;
        let mut stats = NormStats::default();
        let mut shapes_ok = true;
        for t in [1, 2, 5] {
            let input = random_encoder_input(&mut rng, encoder.vocab.len(), t);
            let trace = encoder.forward_traced(&input)?;

            let lookups: Vec<Vec<&[f64]>> = (0..t)
                .map(|i| {
                    vec![
                        encoder.tables.phoneme.lookup(input.phoneme_ids[i]).expect("valid id"),
                        encoder.tables.tone.lookup(input.tones[i] as usize).expect("valid tone"),
                        encoder.tables.label.lookup(input.labels[i] as usize).expect("valid label"),
                    ]
                })
                .collect();
            let x = oracle::embed(&lookups, LN_EPS);
            worst = worst.max(max_abs_diff(&build_input(&input, &encoder.tables)?, &x));

            let mut h = x;
            for (block, bt) in encoder.blocks.iter().zip(&trace.blocks) {
                let (attn, weights) = oracle::lc_attention(
                    &h,
                    &branch_specs(&block.lc_q),
                    &branch_specs(&block.lc_v),
                    &to_rows(&block.k_projection),
                    &to_rows(&block.output_projection),
                    block.heads,
                    LN_EPS,
                );
                worst = worst.max(max_abs_diff(&bt.attention.output, &attn));
                for (got, want) in bt.attention.weights.iter().zip(&weights) {
                    worst = worst.max(max_abs_diff(got, want));
                }
                let out = oracle::conv_ffn(&attn, &conv_spec(&block.ffn_up), &conv_spec(&block.ffn_down), LN_EPS);
                worst = worst.max(max_abs_diff(&bt.output, &out));
                attn_err = attn_err.max(attention_row_error(&bt.attention.weights));

                let h_core = Matrix::new(t, 256, h.concat())?;
                let (attn_pre, attn_out, ffn_pre, ffn_out) = block_norm_inputs(block, &h_core)?;
                stats.observe(&attn_pre, &attn_out);
                stats.observe(&ffn_pre, &ffn_out);
                shapes_ok &= bt.output.shape() == (t, 256);
                h = out;
            }
            let again = Encoder::new(config.clone(), PhonemeVocab::standard())?.forward(&input)?;
            shapes_ok &= again
                .data()
                .iter()
                .zip(trace.output().data())
                .all(|(a, b)| a.to_bits() == b.to_bits());
        }
        let pass = worst < tol::ENCODER_ORACLE_ABS
            && attn_err < tol::ATTENTION_ROW
            && stats.mean < tol::LN_MEAN
            && stats.var_vs_exact < tol::LN_VAR_EXACT
            && shapes_ok;
        Ok(Outcome::new(
            pass,
            format!(
                "oracle max abs diff {worst:.2e}; attention row error {attn_err:.2e}; post-LN |mean| {:.2e}, |var - s2/(s2+eps)| {:.2e}; shapes and determinism {shapes_ok}",
                stats.mean, stats.var_vs_exact
            ),
        ))
    })())
}

pub fn mel_oracle() -> Outcome {
    settle((|| {
        let cfg = MelConfig::default();
        let wav = sine(330.0, 0.1, 0.4);
        let mel: MelSpectrogram = mel_spectrogram(&wav, &cfg)?;
        let sr = SAMPLE_RATE as f64;
        let bank = oracle::triangular_filters(sr, cfg.fft_size, cfg.n_mels, cfg.fmin, cfg.fmax);
        let core_bank = mel_filterbank(&cfg);
        let mut worst: f64 = 0.0;
        for (a, b) in core_bank.iter().zip(&bank) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
        for f in [0, mel.len() / 2, mel.len() - 1] {
            let start = f * cfg.hop_length;
            let frame: Vec<f64> = (0..cfg.win_length)
                .map(|i| wav.samples[start + i] * oracle::hann(i, cfg.win_length))
                .collect();
            let mags = oracle::dft_magnitudes(&frame, cfg.fft_size);
            let energies: Vec<f64> = bank
                .iter()
                .map(|filt| filt.iter().zip(&mags).map(|(w, a)| w * a).sum::<f64>().max(cfg.log_floor))
                .collect();
            let peak = energies.iter().copied().fold(0.0, f64::max);
            for (e, log_mel) in energies.iter().zip(&mel.frames[f]) {
                worst = worst.max((log_mel.exp() - e).abs() / peak);
            }
        }
        Ok(Outcome::new(
            worst < tol::MEL_ABS,
            format!("filterbank and 3 frames vs naive DFT, max deviation {worst:.2e} of frame peak"),
        ))
    })())
}

pub fn cepstra_oracle() -> Outcome {
    settle((|| {
        let mut rng = XorShift64Star::new(0xDC7);
        let frames: Vec<Vec<f64>> = (0..5).map(|_| rng.fill_uniform(80, 6.0)).collect();
        let mel = MelSpectrogram {
            n_mels: 80,
            frames: frames.clone(),
        };
        let cep = mel_cepstra(&mel)?;
        let mut worst: f64 = 0.0;
        for (got, frame) in cep.frames.iter().zip(&frames) {
            let want = oracle::dct2_orthonormal(frame);
            for d in 0..N_CEPSTRA {
                worst = worst.max((got[d] - want[d + 1]).abs());
            }
        }
        Ok(Outcome::new(worst < tol::DCT_ABS, format!("5 frames vs naive DCT-II, max abs diff {worst:.2e}")))
    })())
}
