//! The `amnet` command line.
//!
//! Exit codes: 0 success, 1 a selftest suite failed, 2 usage error, 3 file
//! I/O failure, 4 domain error. Failures print one JSON line
//! `{"error": kind, "message": text}` on the error stream.

pub mod checks;
pub mod output;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use amnet_core::corpus::{parse_corpus_line, run_frontend};
use amnet_core::duration::{aggregate_duration, DurationVector};
use amnet_core::encoder::{Encoder, EncoderConfig, EncoderInput, PhonemeVocab};
use amnet_core::metrics::{read_wav, EvalReport, Evaluator, WavAudio};
use amnet_core::nn::Matrix;
use amnet_core::phrase::{annotate, HmmModel, DEFAULT_SMOOTHING};

use output::{sig12_vec, to_line, Fixed12, Sig12};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Domain(#[from] amnet_core::Error),
    #[error("{0}")]
    Input(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Domain(_) | CliError::Input(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Domain(_) | CliError::Input(_) => "domain",
        }
    }
}

fn domain<E: Into<amnet_core::Error>>(e: E) -> CliError {
    CliError::Domain(e.into())
}

#[derive(Debug, Parser)]
#[command(name = "amnet", version, about = "Mandarin TTS frontend, encoder and evaluation tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the phrase HMM on a space-segmented corpus.
    TrainHmm {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SMOOTHING)]
        smoothing: f64,
    },
    /// Label the phrases of a sentence.
    Segment {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        text: String,
    },
    /// Run the text frontend on one `id|text|pinyin` corpus line.
    Frontend {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        line: String,
    },
    /// Aggregate per-phoneme durations into phrase durations.
    Duration {
        #[arg(long = "frontend-json")]
        frontend_json: PathBuf,
        /// Comma-separated frame counts, one per phoneme.
        #[arg(long)]
        durations: String,
    },
    /// Run the seeded encoder on frontend output and summarize each module.
    Encode {
        #[arg(long = "frontend-json")]
        frontend_json: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        blocks: usize,
    },
    /// Objective metrics between a reference and a synthesized recording.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Run every oracle suite.
    Selftest,
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Mel-cepstral distortion (F0 R² is reported when defined).
    Mcd { reference: PathBuf, hypothesis: PathBuf },
    /// F0 R² over jointly voiced frames, plus MCD.
    F0 {
        reference: PathBuf,
        hypothesis: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

/// Parse `args` (including the program name) and run one subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            return report(err, &CliError::Usage(e.to_string().trim_end().to_string()));
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => report(err, &e),
    }
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: String,
}

fn report(err: &mut dyn Write, e: &CliError) -> i32 {
    let line = to_line(&ErrorLine {
        error: e.kind(),
        message: e.to_string(),
    });
    let _ = err.write_all(line.as_bytes());
    e.exit_code()
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_model(path: &Path) -> Result<HmmModel, CliError> {
    HmmModel::from_json(&read_text(path)?).map_err(domain)
}

fn load_wav(path: &Path) -> Result<WavAudio, CliError> {
    let bytes = fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_wav(&bytes).map_err(domain)
}

fn emit<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    out.write_all(to_line(value).as_bytes())
        .map_err(|source| CliError::Io {
            path: PathBuf::from("<stdout>"),
            source,
        })
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32, CliError> {
    match command {
        Command::TrainHmm {
            corpus,
            out: path,
            smoothing,
        } => {
            let text = read_text(&corpus)?;
            let model = HmmModel::train(&text, smoothing).map_err(domain)?;
            write_file(&path, model.to_json().as_bytes())?;
            let vocab = model.log_emit[0].len();
            emit(out, &TrainSummary {
                out: path.display().to_string(),
                sentences: text.lines().filter(|l| !l.trim().is_empty()).count(),
                vocab,
                smoothing: Sig12(smoothing),
            })?;
        }
        Command::Segment { model, text } => {
            let model = load_model(&model)?;
            let ann = annotate(&model, &text).map_err(domain)?;
            emit(out, &SegmentOutput {
                chars: ann.chars.iter().map(|c| c.to_string()).collect(),
                labels: ann.labels.iter().map(|l| l.as_str()).collect(),
                numeric: ann.numeric.clone(),
                phrases: ann.phrases(),
            })?;
        }
        Command::Frontend { model, line } => {
            let model = load_model(&model)?;
            let entry = parse_corpus_line(&line).map_err(domain)?;
            let fe = run_frontend(&model, entry).map_err(domain)?;
            emit(out, &FrontendJson {
                phonemes: fe.sequence.phonemes.clone(),
                tones: fe.sequence.tones.clone(),
                labels_per_phoneme: fe.labels_per_phoneme.iter().map(|l| l.as_str().to_string()).collect(),
                numeric_per_phoneme: fe.numeric_per_phoneme.clone(),
                phrase_spans: fe.phrase_spans.iter().map(|&(s, l)| [s, l]).collect(),
            })?;
        }
        Command::Duration {
            frontend_json,
            durations,
        } => {
            let fe = load_frontend(&frontend_json)?;
            let durations = DurationVector::parse_csv(&durations).map_err(domain)?;
            let spans: Vec<(usize, usize)> = fe.phrase_spans.iter().map(|s| (s[0], s[1])).collect();
            let phrases = aggregate_duration(&durations, &spans).map_err(domain)?;
            emit(out, &DurationOutput {
                total: phrases.total(),
                phrase_durations: phrases.0,
            })?;
        }
        Command::Encode {
            frontend_json,
            seed,
            blocks,
        } => {
            let fe = load_frontend(&frontend_json)?;
            let config = EncoderConfig {
                seed,
                blocks,
                ..EncoderConfig::default()
            };
            let encoder = Encoder::new(config, PhonemeVocab::standard()).map_err(domain)?;
            let seq_len = fe.phonemes.len();
            if fe.tones.len() != seq_len || fe.numeric_per_phoneme.len() != seq_len {
                return Err(CliError::Input(format!(
                    "frontend JSON has {} phonemes, {} tones and {} labels",
                    seq_len,
                    fe.tones.len(),
                    fe.numeric_per_phoneme.len()
                )));
            }
            let phoneme_ids = fe
                .phonemes
                .iter()
                .map(|p| {
                    encoder
                        .vocab
                        .index(p)
                        .ok_or_else(|| domain(amnet_core::encoder::EncoderError::UnknownPhoneme(p.clone())))
                })
                .collect::<Result<_, _>>()?;
            let input = EncoderInput {
                phoneme_ids,
                tones: fe.tones.clone(),
                labels: fe.numeric_per_phoneme.clone(),
            };
            let trace = encoder.forward_traced(&input).map_err(domain)?;
            let mut modules = vec![ModuleSummary::new("input", &trace.input)];
            for (i, block) in trace.blocks.iter().enumerate() {
                modules.push(ModuleSummary::new(format!("block{i}.attention"), &block.attention.output));
                modules.push(ModuleSummary::new(format!("block{i}.ffn"), &block.output));
            }
            let output = trace.output();
            emit(out, &EncodeOutput {
                rows: output.rows(),
                cols: output.cols(),
                checksum: Fixed12(output.sum()),
                row0: sig12_vec(output.row(0)),
                modules,
            })?;
        }
        Command::Eval(EvalCommand::Mcd {
            reference,
            hypothesis,
        }) => {
            let (r, h) = (load_wav(&reference)?, load_wav(&hypothesis)?);
            let report = Evaluator::default().report(&r, &h).map_err(domain)?;
            emit(out, &ReportJson::from(&report))?;
        }
        Command::Eval(EvalCommand::F0 {
            reference,
            hypothesis,
            csv,
        }) => {
            let (r, h) = (load_wav(&reference)?, load_wav(&hypothesis)?);
            let (report, pair) = Evaluator::default().f0_r2(&r, &h).map_err(domain)?;
            if let Some(path) = csv {
                write_file(&path, pair.to_csv().as_bytes())?;
            }
            emit(out, &ReportJson::from(&report))?;
        }
        Command::Selftest => {
            let suites: Vec<SuiteResult> = checks::selftest_suites()
                .into_iter()
                .map(|s| {
                    let outcome = (s.run)();
                    SuiteResult {
                        name: s.key,
                        pass: outcome.pass,
                        detail: outcome.detail,
                    }
                })
                .collect();
            let failed = suites.iter().filter(|s| !s.pass).count();
            emit(out, &SelftestOutput {
                passed: suites.len() - failed,
                failed,
                suites,
            })?;
            return Ok(if failed == 0 { 0 } else { 1 });
        }
    }
    Ok(0)
}

fn load_frontend(path: &Path) -> Result<FrontendJson, CliError> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Input(format!("{}: not frontend JSON: {e}", path.display())))
}

#[derive(Serialize)]
struct TrainSummary {
    out: String,
    sentences: usize,
    vocab: usize,
    smoothing: Sig12,
}

#[derive(Serialize)]
struct SegmentOutput {
    chars: Vec<String>,
    labels: Vec<&'static str>,
    numeric: Vec<u8>,
    phrases: Vec<String>,
}

/// Output of `frontend`, also the input of `duration` and `encode`.
#[derive(Debug, Serialize, Deserialize)]
pub struct FrontendJson {
    pub phonemes: Vec<String>,
    pub tones: Vec<u8>,
    pub labels_per_phoneme: Vec<String>,
    pub numeric_per_phoneme: Vec<u8>,
    /// `[start, len]` over phonemes.
    pub phrase_spans: Vec<[usize; 2]>,
}

#[derive(Serialize)]
struct DurationOutput {
    phrase_durations: Vec<u64>,
    total: u64,
}

#[derive(Serialize)]
struct ModuleSummary {
    name: String,
    rows: usize,
    cols: usize,
    checksum: Fixed12,
}

impl ModuleSummary {
    fn new(name: impl Into<String>, m: &Matrix) -> Self {
        ModuleSummary {
            name: name.into(),
            rows: m.rows(),
            cols: m.cols(),
            checksum: Fixed12(m.sum()),
        }
    }
}

#[derive(Serialize)]
struct EncodeOutput {
    rows: usize,
    cols: usize,
    checksum: Fixed12,
    row0: Vec<Sig12>,
    modules: Vec<ModuleSummary>,
}

#[derive(Serialize)]
struct ConfigJson {
    hop: usize,
    win: usize,
    n_mels: usize,
    n_cepstra: usize,
}

#[derive(Serialize)]
struct ReportJson {
    mcd_db: Sig12,
    r2_f0: Option<Sig12>,
    frames_compared: usize,
    voiced_overlap: usize,
    config: ConfigJson,
}

impl From<&EvalReport> for ReportJson {
    fn from(r: &EvalReport) -> Self {
        ReportJson {
            mcd_db: Sig12(r.mcd_db),
            r2_f0: r.r2_f0.map(Sig12),
            frames_compared: r.frames_compared,
            voiced_overlap: r.voiced_overlap,
            config: ConfigJson {
                hop: r.config.hop,
                win: r.config.win,
                n_mels: r.config.n_mels,
                n_cepstra: r.config.n_cepstra,
            },
        }
    }
}

#[derive(Serialize)]
struct SuiteResult {
    name: &'static str,
    pass: bool,
    detail: String,
}

#[derive(Serialize)]
struct SelftestOutput {
    passed: usize,
    failed: usize,
    suites: Vec<SuiteResult>,
}
