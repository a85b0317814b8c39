//! Mandarin speech-synthesis frontend and verification kernels.
//!
//! - [`pinyin`]: toned pinyin splitting and tone/phoneme decoupling
//! - [`phrase`]: HMM + Viterbi phrase segmentation with SBME labels
//! - [`duration`]: phrase-level duration aggregation and penalty
//! - [`nn`]: 1-D convolution, local convolution module and friends
//! - [`encoder`]: deterministic encoder with local-convolution attention
//! - [`metrics`]: mel features, MCD, YIN pitch and R²
//! - [`corpus`]: corpus line ingestion and the end-to-end text frontend

pub mod corpus;
pub mod duration;
pub mod encoder;
pub mod metrics;
pub mod nn;
pub mod phrase;
pub mod pinyin;

use thiserror::Error;

/// Any domain error raised by this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Pinyin(#[from] pinyin::PinyinError),
    #[error(transparent)]
    Phrase(#[from] phrase::PhraseError),
    #[error(transparent)]
    Duration(#[from] duration::DurationError),
    #[error(transparent)]
    Nn(#[from] nn::NnError),
    #[error(transparent)]
    Encoder(#[from] encoder::EncoderError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
