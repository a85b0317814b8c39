//! Toned pinyin parsing and tone/phoneme decoupling.
//!
//! A syllable such as `wo3` is split into an optional initial (`w`) and a
//! final (`o`). Decoupling turns a syllable sequence into a phoneme sequence
//! that carries no tone marks plus an aligned tone sequence in which every
//! initial is coded `0` and every final carries its lexical tone `1..=5`.

use std::fmt;

use thiserror::Error;

/// Initial consonants, longest-match first is handled by [`split_syllable`].
/// The 21 standard initials followed by the glides `y` and `w`.
pub const INITIALS: [&str; 23] = [
    "b", "p", "m", "f", "d", "t", "n", "l", "g", "k", "h", "j", "q", "x", "zh", "ch", "sh", "r",
    "z", "c", "s", "y", "w",
];

/// Tone code carried by initial consonants in a decoupled tone sequence.
pub const INITIAL_TONE: u8 = 0;
/// The neutral (fifth) tone.
pub const NEUTRAL_TONE: u8 = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PinyinError {
    #[error("empty pinyin token")]
    EmptyToken,
    #[error("invalid character {ch:?} in pinyin token {token:?}")]
    InvalidChar { token: String, ch: char },
    #[error("tone digit {digit} outside 1..=5 in {token:?}")]
    BadTone { token: String, digit: u8 },
    #[error("pinyin token {token:?} has no final")]
    EmptyFinal { token: String },
    #[error("token {index}: {source}")]
    AtToken {
        index: usize,
        #[source]
        source: Box<PinyinError>,
    },
    #[error("phoneme/tone length mismatch: {phonemes} phonemes, {tones} tones")]
    LengthMismatch { phonemes: usize, tones: usize },
    #[error("syllable span ({start}, {len}) is invalid")]
    BadSpan { start: usize, len: usize },
    #[error("inconsistent tone {tone} on phoneme {phoneme:?} at position {position}")]
    ToneMismatch {
        position: usize,
        phoneme: String,
        tone: u8,
    },
}

pub fn is_initial(symbol: &str) -> bool {
    INITIALS.contains(&symbol)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PinyinSyllable {
    pub raw: String,
    pub initial: Option<String>,
    pub final_: String,
    pub tone: u8,
}

impl PinyinSyllable {
    /// Lowercase `initial + final + tone digit`.
    pub fn canonical(&self) -> String {
        format!(
            "{}{}{}",
            self.initial.as_deref().unwrap_or(""),
            self.final_,
            self.tone
        )
    }
}

impl fmt::Display for PinyinSyllable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

/// Split a toned pinyin token into initial, final and tone.
///
/// Input is case-insensitive. A missing tone digit means the neutral tone.
pub fn split_syllable(token: &str) -> Result<PinyinSyllable, PinyinError> {
    if token.is_empty() {
        return Err(PinyinError::EmptyToken);
    }
    let lower = token.to_ascii_lowercase();
    let (body, tone) = match lower.as_bytes()[lower.len() - 1] {
        d @ b'0'..=b'9' => {
            let digit = d - b'0';
            if !(1..=5).contains(&digit) {
                return Err(PinyinError::BadTone {
                    token: token.to_string(),
                    digit,
                });
            }
            (&lower[..lower.len() - 1], digit)
        }
        _ => (lower.as_str(), NEUTRAL_TONE),
    };
    if let Some(ch) = body.chars().find(|c| !c.is_ascii_lowercase()) {
        return Err(PinyinError::InvalidChar {
            token: token.to_string(),
            ch,
        });
    }

    let initial = INITIALS
        .iter()
        .filter(|i| body.starts_with(**i))
        .max_by_key(|i| i.len())
        .copied();
    let final_ = &body[initial.map_or(0, str::len)..];
    if final_.is_empty() {
        return Err(PinyinError::EmptyFinal {
            token: token.to_string(),
        });
    }

    Ok(PinyinSyllable {
        raw: token.to_string(),
        initial: initial.map(str::to_string),
        final_: final_.to_string(),
        tone,
    })
}

/// Toneless phoneme sequence with its aligned tone sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PhonemeToneSeq {
    pub phonemes: Vec<String>,
    pub tones: Vec<u8>,
    /// `(start, len)` over `phonemes`, one per source syllable.
    pub syllable_spans: Vec<(usize, usize)>,
}

impl PhonemeToneSeq {
    pub fn len(&self) -> usize {
        self.phonemes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phonemes.is_empty()
    }

    /// Check every structural invariant of the sequence.
    pub fn validate(&self) -> Result<(), PinyinError> {
        if self.phonemes.len() != self.tones.len() {
            return Err(PinyinError::LengthMismatch {
                phonemes: self.phonemes.len(),
                tones: self.tones.len(),
            });
        }
        let mut cursor = 0;
        for &(start, len) in &self.syllable_spans {
            if start != cursor || !(1..=2).contains(&len) || start + len > self.phonemes.len() {
                return Err(PinyinError::BadSpan { start, len });
            }
            for pos in start..start + len {
                let is_onset = len == 2 && pos == start;
                let phoneme = &self.phonemes[pos];
                let tone = self.tones[pos];
                let ok = if is_onset {
                    tone == INITIAL_TONE && is_initial(phoneme)
                } else {
                    (1..=5).contains(&tone) && !is_initial(phoneme)
                };
                if !ok {
                    return Err(PinyinError::ToneMismatch {
                        position: pos,
                        phoneme: phoneme.clone(),
                        tone,
                    });
                }
            }
            cursor += len;
        }
        if cursor != self.phonemes.len() {
            return Err(PinyinError::BadSpan {
                start: cursor,
                len: 0,
            });
        }
        Ok(())
    }
}

/// Split every token into `[initial?, final]` and emit the aligned tones.
pub fn decouple<S: AsRef<str>>(tokens: &[S]) -> Result<PhonemeToneSeq, PinyinError> {
    let mut seq = PhonemeToneSeq::default();
    for (index, token) in tokens.iter().enumerate() {
        let syl = split_syllable(token.as_ref()).map_err(|e| PinyinError::AtToken {
            index,
            source: Box::new(e),
        })?;
        let start = seq.phonemes.len();
        if let Some(initial) = syl.initial {
            seq.phonemes.push(initial);
            seq.tones.push(INITIAL_TONE);
        }
        seq.phonemes.push(syl.final_);
        seq.tones.push(syl.tone);
        seq.syllable_spans.push((start, seq.phonemes.len() - start));
    }
    Ok(seq)
}

/// Inverse of [`decouple`]: rebuild canonical toned syllables.
pub fn recombine(seq: &PhonemeToneSeq) -> Result<Vec<String>, PinyinError> {
    seq.validate()?;
    Ok(seq
        .syllable_spans
        .iter()
        .map(|&(start, len)| {
            let final_pos = start + len - 1;
            let initial = if len == 2 {
                seq.phonemes[start].as_str()
            } else {
                ""
            };
            format!(
                "{initial}{}{}",
                seq.phonemes[final_pos], seq.tones[final_pos]
            )
        })
        .collect())
}

/// One row of the shipped syllable table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyllableRow {
    pub pinyin: String,
    pub initial: Option<String>,
    pub final_: String,
}

/// The syllable fixture table shipped with the crate.
pub const SYLLABLE_TABLE: &str = include_str!("../data/syllables.tsv");

/// Parse `pinyin<TAB>initial<TAB>final` rows; an empty initial column means
/// a zero-initial syllable. Blank lines and `#` comments are skipped.
pub fn parse_syllable_table(text: &str) -> Result<Vec<SyllableRow>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 || cols[0].is_empty() || cols[2].is_empty() {
                return Err(format!("syllable table line {}: expected 3 columns", n + 1));
            }
            Ok(SyllableRow {
                pinyin: cols[0].to_string(),
                initial: (!cols[1].is_empty()).then(|| cols[1].to_string()),
                final_: cols[2].to_string(),
            })
        })
        .collect()
}

pub fn syllable_table() -> Vec<SyllableRow> {
    parse_syllable_table(SYLLABLE_TABLE).expect("shipped syllable table is well-formed")
}
