//! Corpus lines and the text-to-encoder-input frontend.
//!
//! A corpus line is `id|text|pinyin tokens`. Prosody marks `#1`..`#4` and
//! every non-CJK character are stripped from the text, after which each
//! remaining character must pair with exactly one toned pinyin token.

use thiserror::Error;

use crate::phrase::{
    effective_chars, labels_to_phoneme_level, phoneme_phrase_spans, viterbi, HmmModel,
    PhraseAnnotation, PhraseError, PhraseLabel,
};
use crate::pinyin::{decouple, PhonemeToneSeq, PinyinError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("expected exactly two '|' separators, found {0}")]
    Separators(usize),
    #[error("{chars} characters but {tokens} pinyin tokens")]
    CountMismatch { chars: usize, tokens: usize },
    #[error("empty pinyin token (tokens are separated by single spaces)")]
    EmptyToken,
    #[error(transparent)]
    Pinyin(#[from] PinyinError),
    #[error(transparent)]
    Phrase(#[from] PhraseError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub id: String,
    pub text: Vec<char>,
    pub pinyin_tokens: Vec<String>,
}

/// Drop `#1`..`#4` prosody marks, then keep only CJK characters.
pub fn strip_text(text: &str) -> Vec<char> {
    let mut cleaned = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '#' && matches!(chars.peek(), Some('1'..='4')) {
            chars.next();
            continue;
        }
        cleaned.push(c);
    }
    effective_chars(&cleaned)
}

pub fn parse_corpus_line(line: &str) -> Result<CorpusEntry, CorpusError> {
    let line = line.trim_end_matches(['\r', '\n']);
    let parts: Vec<&str> = line.split('|').collect();
    if parts.len() != 3 {
        return Err(CorpusError::Separators(parts.len() - 1));
    }
    let text = strip_text(parts[1]);
    let pinyin = parts[2].trim();
    let pinyin_tokens: Vec<String> = if pinyin.is_empty() {
        Vec::new()
    } else {
        pinyin.split(' ').map(str::to_string).collect()
    };
    if pinyin_tokens.iter().any(|t| t.is_empty()) {
        return Err(CorpusError::EmptyToken);
    }
    if text.len() != pinyin_tokens.len() {
        return Err(CorpusError::CountMismatch {
            chars: text.len(),
            tokens: pinyin_tokens.len(),
        });
    }
    Ok(CorpusEntry {
        id: parts[0].to_string(),
        text,
        pinyin_tokens,
    })
}

/// Everything the encoder needs for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Frontend {
    pub entry: CorpusEntry,
    pub annotation: PhraseAnnotation,
    pub sequence: PhonemeToneSeq,
    pub labels_per_phoneme: Vec<PhraseLabel>,
    pub numeric_per_phoneme: Vec<u8>,
    /// Phrase spans over phonemes.
    pub phrase_spans: Vec<(usize, usize)>,
}

pub fn run_frontend(model: &HmmModel, entry: CorpusEntry) -> Result<Frontend, CorpusError> {
    if entry.text.is_empty() {
        return Err(PhraseError::EmptyText.into());
    }
    let sequence = decouple(&entry.pinyin_tokens)?;
    let labels = viterbi(model, &entry.text);
    let annotation = PhraseAnnotation::from_labels(entry.text.clone(), labels);
    let numeric_per_phoneme = labels_to_phoneme_level(&annotation, &sequence.syllable_spans)?;
    let labels_per_phoneme = numeric_per_phoneme
        .iter()
        .map(|&c| PhraseLabel::from_code(c).expect("codes come from labels"))
        .collect();
    let phrase_spans = phoneme_phrase_spans(&annotation, &sequence.syllable_spans)?;
    Ok(Frontend {
        entry,
        annotation,
        sequence,
        labels_per_phoneme,
        numeric_per_phoneme,
        phrase_spans,
    })
}
