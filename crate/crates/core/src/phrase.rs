//! Phrase segmentation with a BMES hidden Markov model and SBME annotation.
//!
//! Every character is tagged as the single character of a phrase (`S`), or
//! the first (`B`), a middle (`M`) or the last (`E`) character of a longer
//! phrase. Labels map to fixed numeric codes `S=1, B=2, M=3, E=4`, which are
//! then repeated down to phoneme level for the encoder input.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhraseError {
    #[error("empty phrase group at index {0}")]
    EmptyGroup(usize),
    #[error("training corpus has no sentences")]
    EmptyCorpus,
    #[error("corpus line {line}: empty phrase (phrases must be separated by single spaces)")]
    EmptyPhrase { line: usize },
    #[error("smoothing must be positive and finite, got {0}")]
    BadSmoothing(f64),
    #[error("text has no characters left after removing punctuation and non-CJK symbols")]
    EmptyText,
    #[error("{chars} characters but {spans} syllable spans")]
    CountMismatch { chars: usize, spans: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// Position of a character inside its phrase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PhraseLabel {
    S,
    B,
    M,
    E,
}

impl PhraseLabel {
    /// Hidden-state order used by the model; tie-breaking prefers earlier states.
    pub const STATE_ORDER: [PhraseLabel; 4] =
        [PhraseLabel::B, PhraseLabel::M, PhraseLabel::E, PhraseLabel::S];

    pub fn code(self) -> u8 {
        match self {
            PhraseLabel::S => 1,
            PhraseLabel::B => 2,
            PhraseLabel::M => 3,
            PhraseLabel::E => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(PhraseLabel::S),
            2 => Some(PhraseLabel::B),
            3 => Some(PhraseLabel::M),
            4 => Some(PhraseLabel::E),
            _ => None,
        }
    }

    /// Index into [`Self::STATE_ORDER`].
    pub fn state(self) -> usize {
        match self {
            PhraseLabel::B => 0,
            PhraseLabel::M => 1,
            PhraseLabel::E => 2,
            PhraseLabel::S => 3,
        }
    }

    pub fn from_state(state: usize) -> Self {
        Self::STATE_ORDER[state]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PhraseLabel::S => "S",
            PhraseLabel::B => "B",
            PhraseLabel::M => "M",
            PhraseLabel::E => "E",
        }
    }
}

impl fmt::Display for PhraseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PhraseLabel {
    type Err = PhraseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "S" => Ok(PhraseLabel::S),
            "B" => Ok(PhraseLabel::B),
            "M" => Ok(PhraseLabel::M),
            "E" => Ok(PhraseLabel::E),
            other => Err(PhraseError::InvalidModel(format!("unknown state {other:?}"))),
        }
    }
}

const E: usize = 2;
const S: usize = 3;

/// `LEGAL_TRANS[from][to]` in state order `[B, M, E, S]`.
pub const LEGAL_TRANS: [[bool; 4]; 4] = [
    [false, true, true, false],
    [false, true, true, false],
    [true, false, false, true],
    [true, false, false, true],
];
pub const LEGAL_START: [bool; 4] = [true, false, false, true];
pub const LEGAL_END: [bool; 4] = [false, false, true, true];

/// Whether `labels` is a sequence of whole phrases, i.e. matches `(S|BM*E)+`.
pub fn is_well_formed(labels: &[PhraseLabel]) -> bool {
    if labels.is_empty() {
        return false;
    }
    let mut open = false;
    for &l in labels {
        match (open, l) {
            (false, PhraseLabel::S) => {}
            (false, PhraseLabel::B) => open = true,
            (true, PhraseLabel::M) => {}
            (true, PhraseLabel::E) => open = false,
            _ => return false,
        }
    }
    !open
}

/// SBME labels for an explicit segmentation.
pub fn labels_from_segmentation<S: AsRef<str>>(
    phrases: &[S],
) -> Result<Vec<PhraseLabel>, PhraseError> {
    let mut labels = Vec::new();
    for (i, phrase) in phrases.iter().enumerate() {
        match phrase.as_ref().chars().count() {
            0 => return Err(PhraseError::EmptyGroup(i)),
            1 => labels.push(PhraseLabel::S),
            n => {
                labels.push(PhraseLabel::B);
                labels.extend(std::iter::repeat(PhraseLabel::M).take(n - 2));
                labels.push(PhraseLabel::E);
            }
        }
    }
    Ok(labels)
}

pub fn labels_to_numeric(labels: &[PhraseLabel]) -> Vec<u8> {
    labels.iter().map(|l| l.code()).collect()
}

/// `(start, len)` phrase spans read off a well-formed label sequence.
pub fn phrase_spans(labels: &[PhraseLabel]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    for (i, &l) in labels.iter().enumerate() {
        match l {
            PhraseLabel::S => {
                spans.push((i, 1));
                start = i + 1;
            }
            PhraseLabel::B => start = i,
            PhraseLabel::M => {}
            PhraseLabel::E => {
                spans.push((start, i + 1 - start));
                start = i + 1;
            }
        }
    }
    spans
}

/// Characters kept for segmentation: CJK unified ideographs and extensions.
pub fn is_cjk(c: char) -> bool {
    matches!(c,
        '\u{4E00}'..='\u{9FFF}'
        | '\u{3400}'..='\u{4DBF}'
        | '\u{F900}'..='\u{FAFF}'
        | '\u{20000}'..='\u{2A6DF}'
        | '\u{2A700}'..='\u{2EBEF}'
        | '\u{30000}'..='\u{3134F}')
}

/// Raw corpus statistics before smoothing, in state order `[B, M, E, S]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HmmCounts {
    pub init: [u64; 4],
    pub trans: [[u64; 4]; 4],
    pub emit: [BTreeMap<char, u64>; 4],
    pub sentences: usize,
}

impl HmmCounts {
    pub fn from_corpus(corpus: &str) -> Result<Self, PhraseError> {
        let mut counts = HmmCounts::default();
        for (n, line) in corpus.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let phrases: Vec<&str> = line.split(' ').collect();
            if phrases.iter().any(|p| p.is_empty()) {
                return Err(PhraseError::EmptyPhrase { line: n + 1 });
            }
            let labels = labels_from_segmentation(&phrases)?;
            let chars = phrases.iter().flat_map(|p| p.chars());
            let mut prev: Option<usize> = None;
            for (c, label) in chars.zip(&labels) {
                let s = label.state();
                match prev {
                    None => counts.init[s] += 1,
                    Some(p) => counts.trans[p][s] += 1,
                }
                *counts.emit[s].entry(c).or_insert(0) += 1;
                prev = Some(s);
            }
            counts.sentences += 1;
        }
        if counts.sentences == 0 {
            return Err(PhraseError::EmptyCorpus);
        }
        Ok(counts)
    }

    pub fn vocab(&self) -> BTreeSet<char> {
        self.emit.iter().flat_map(|m| m.keys().copied()).collect()
    }
}

/// Log-space BMES hidden Markov model. Arrays are indexed in state order
/// `[B, M, E, S]`; structurally illegal entries hold `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    pub log_init: [f64; 4],
    pub log_trans: [[f64; 4]; 4],
    pub log_emit: [BTreeMap<char, f64>; 4],
    /// Emission log-probability of a character absent from a state's table.
    pub unk_log_floor: f64,
    pub smoothing: f64,
}

pub const DEFAULT_SMOOTHING: f64 = 1e-3;

fn smoothed_log_row(counts: &[u64; 4], legal: &[bool; 4], smoothing: f64) -> [f64; 4] {
    let support = legal.iter().filter(|&&l| l).count() as f64;
    let total: f64 = counts
        .iter()
        .zip(legal)
        .filter(|(_, &l)| l)
        .map(|(&c, _)| c as f64)
        .sum();
    let denom = total + smoothing * support;
    let mut row = [f64::NEG_INFINITY; 4];
    for s in 0..4 {
        if legal[s] {
            row[s] = ((counts[s] as f64 + smoothing) / denom).ln();
        }
    }
    row
}

impl HmmModel {
    /// Maximum-likelihood estimate with additive smoothing over every legal
    /// start, transition and (state, character) pair.
    pub fn train(corpus: &str, smoothing: f64) -> Result<Self, PhraseError> {
        if !(smoothing > 0.0 && smoothing.is_finite()) {
            return Err(PhraseError::BadSmoothing(smoothing));
        }
        let counts = HmmCounts::from_corpus(corpus)?;
        Ok(Self::from_counts(&counts, smoothing))
    }

    pub fn from_counts(counts: &HmmCounts, smoothing: f64) -> Self {
        let vocab = counts.vocab();
        let v = vocab.len() as f64;
        let log_init = smoothed_log_row(&counts.init, &LEGAL_START, smoothing);
        let mut log_trans = [[f64::NEG_INFINITY; 4]; 4];
        for from in 0..4 {
            log_trans[from] = smoothed_log_row(&counts.trans[from], &LEGAL_TRANS[from], smoothing);
        }
        let mut log_emit: [BTreeMap<char, f64>; 4] = Default::default();
        let mut total_mass = 0.0;
        for s in 0..4 {
            let mass: f64 = counts.emit[s].values().map(|&c| c as f64).sum();
            total_mass += mass;
            let denom = mass + smoothing * v;
            log_emit[s] = vocab
                .iter()
                .map(|c| {
                    let n = counts.emit[s].get(c).copied().unwrap_or(0) as f64;
                    (*c, ((n + smoothing) / denom).ln())
                })
                .collect();
        }
        let unk_log_floor = (smoothing / (total_mass + smoothing * v)).ln();
        HmmModel {
            log_init,
            log_trans,
            log_emit,
            unk_log_floor,
            smoothing,
        }
    }

    pub fn emission(&self, state: usize, c: char) -> f64 {
        self.log_emit[state]
            .get(&c)
            .copied()
            .unwrap_or(self.unk_log_floor)
    }

    /// Check structural zeros and that every distribution is normalized.
    pub fn validate(&self) -> Result<(), PhraseError> {
        let bad = |msg: String| Err(PhraseError::InvalidModel(msg));
        let check_row = |name: &str, row: &[f64; 4], legal: &[bool; 4]| -> Result<(), PhraseError> {
            for s in 0..4 {
                let v = row[s];
                if legal[s] {
                    if !v.is_finite() {
                        return bad(format!("{name}[{}] must be finite", PhraseLabel::from_state(s)));
                    }
                } else if v != f64::NEG_INFINITY {
                    return bad(format!("{name}[{}] must be -inf", PhraseLabel::from_state(s)));
                }
            }
            let total: f64 = row.iter().map(|v| v.exp()).sum();
            if (total - 1.0).abs() > 1e-9 {
                return bad(format!("{name} sums to {total}"));
            }
            Ok(())
        };
        check_row("log_init", &self.log_init, &LEGAL_START)?;
        for from in 0..4 {
            let name = format!("log_trans[{}]", PhraseLabel::from_state(from));
            check_row(&name, &self.log_trans[from], &LEGAL_TRANS[from])?;
        }
        for s in 0..4 {
            if self.log_emit[s].values().any(|v| v.is_nan() || *v > 0.0) {
                return bad(format!("log_emit[{}] has invalid entries", PhraseLabel::from_state(s)));
            }
            let total: f64 = self.log_emit[s].values().map(|v| v.exp()).sum();
            if !self.log_emit[s].is_empty() && (total - 1.0).abs() > 1e-9 {
                return bad(format!(
                    "log_emit[{}] sums to {total}",
                    PhraseLabel::from_state(s)
                ));
            }
        }
        if !(self.unk_log_floor.is_finite() && self.unk_log_floor <= 0.0) {
            return bad(format!("unk_log_floor {} out of range", self.unk_log_floor));
        }
        if !(self.smoothing > 0.0 && self.smoothing.is_finite()) {
            return bad(format!("smoothing {} out of range", self.smoothing));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(&ModelFile::from(self))
            .expect("model serialization cannot fail");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, PhraseError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| PhraseError::InvalidModel(e.to_string()))?;
        let model = HmmModel::try_from(file)?;
        model.validate()?;
        Ok(model)
    }
}

/// Most probable legal label sequence for `chars`.
///
/// Ties are broken in favour of the earlier state in `[B, M, E, S]`, first
/// for the final state and then for each predecessor while backtracking.
/// Empty input yields an empty sequence.
pub fn viterbi(model: &HmmModel, chars: &[char]) -> Vec<PhraseLabel> {
    if chars.is_empty() {
        return Vec::new();
    }
    let n = chars.len();
    let mut delta = vec![[f64::NEG_INFINITY; 4]; n];
    let mut back = vec![[0usize; 4]; n];
    for s in 0..4 {
        delta[0][s] = model.log_init[s] + model.emission(s, chars[0]);
    }
    for t in 1..n {
        for s in 0..4 {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for p in 0..4 {
                let cand = delta[t - 1][p] + model.log_trans[p][s];
                if cand > best {
                    best = cand;
                    arg = p;
                }
            }
            delta[t][s] = best + model.emission(s, chars[t]);
            back[t][s] = arg;
        }
    }
    let mut state = S;
    let mut best = f64::NEG_INFINITY;
    for s in [E, S] {
        if delta[n - 1][s] > best {
            best = delta[n - 1][s];
            state = s;
        }
    }
    let mut path = vec![0usize; n];
    path[n - 1] = state;
    for t in (1..n).rev() {
        state = back[t][state];
        path[t - 1] = state;
    }
    path.into_iter().map(PhraseLabel::from_state).collect()
}

/// Segmentation result for one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseAnnotation {
    pub chars: Vec<char>,
    pub labels: Vec<PhraseLabel>,
    pub numeric: Vec<u8>,
    /// `(start, len)` over `chars`.
    pub phrase_spans: Vec<(usize, usize)>,
}

impl PhraseAnnotation {
    pub fn from_labels(chars: Vec<char>, labels: Vec<PhraseLabel>) -> Self {
        let numeric = labels_to_numeric(&labels);
        let phrase_spans = phrase_spans(&labels);
        PhraseAnnotation {
            chars,
            labels,
            numeric,
            phrase_spans,
        }
    }

    pub fn phrases(&self) -> Vec<String> {
        self.phrase_spans
            .iter()
            .map(|&(s, l)| self.chars[s..s + l].iter().collect())
            .collect()
    }
}

/// Keep only CJK characters of `text`.
pub fn effective_chars(text: &str) -> Vec<char> {
    text.chars().filter(|&c| is_cjk(c)).collect()
}

pub fn annotate(model: &HmmModel, text: &str) -> Result<PhraseAnnotation, PhraseError> {
    let chars = effective_chars(text);
    if chars.is_empty() {
        return Err(PhraseError::EmptyText);
    }
    let labels = viterbi(model, &chars);
    Ok(PhraseAnnotation::from_labels(chars, labels))
}

/// Repeat each character's numeric code once per phoneme of its syllable.
pub fn labels_to_phoneme_level(
    annotation: &PhraseAnnotation,
    syllable_spans: &[(usize, usize)],
) -> Result<Vec<u8>, PhraseError> {
    if annotation.numeric.len() != syllable_spans.len() {
        return Err(PhraseError::CountMismatch {
            chars: annotation.numeric.len(),
            spans: syllable_spans.len(),
        });
    }
    Ok(annotation
        .numeric
        .iter()
        .zip(syllable_spans)
        .flat_map(|(&code, &(_, len))| std::iter::repeat(code).take(len))
        .collect())
}

/// Phrase spans re-expressed over phonemes instead of characters.
pub fn phoneme_phrase_spans(
    annotation: &PhraseAnnotation,
    syllable_spans: &[(usize, usize)],
) -> Result<Vec<(usize, usize)>, PhraseError> {
    if annotation.chars.len() != syllable_spans.len() {
        return Err(PhraseError::CountMismatch {
            chars: annotation.chars.len(),
            spans: syllable_spans.len(),
        });
    }
    Ok(annotation
        .phrase_spans
        .iter()
        .map(|&(start, len)| {
            let first = syllable_spans[start].0;
            let (last_start, last_len) = syllable_spans[start + len - 1];
            (first, last_start + last_len - first)
        })
        .collect())
}

/// A log-probability that serializes `-inf` as the string `"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LogProb(f64);

impl Serialize for LogProb {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0 == f64::NEG_INFINITY {
            serializer.serialize_str("-inf")
        } else {
            serializer.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for LogProb {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) => Ok(LogProb(v)),
            Raw::Str(s) if s == "-inf" => Ok(LogProb(f64::NEG_INFINITY)),
            Raw::Str(s) => Err(de::Error::custom(format!("invalid log-probability {s:?}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    states: Vec<String>,
    log_init: Vec<LogProb>,
    log_trans: Vec<Vec<LogProb>>,
    log_emit: BTreeMap<String, BTreeMap<char, LogProb>>,
    unk_log_floor: LogProb,
    smoothing: f64,
}

impl From<&HmmModel> for ModelFile {
    fn from(m: &HmmModel) -> Self {
        let states = PhraseLabel::STATE_ORDER;
        ModelFile {
            states: states.iter().map(|s| s.to_string()).collect(),
            log_init: m.log_init.iter().map(|&v| LogProb(v)).collect(),
            log_trans: m
                .log_trans
                .iter()
                .map(|row| row.iter().map(|&v| LogProb(v)).collect())
                .collect(),
            log_emit: states
                .iter()
                .map(|s| {
                    let table = m.log_emit[s.state()]
                        .iter()
                        .map(|(&c, &v)| (c, LogProb(v)))
                        .collect();
                    (s.to_string(), table)
                })
                .collect(),
            unk_log_floor: LogProb(m.unk_log_floor),
            smoothing: m.smoothing,
        }
    }
}

impl TryFrom<ModelFile> for HmmModel {
    type Error = PhraseError;

    fn try_from(file: ModelFile) -> Result<Self, Self::Error> {
        let bad = |msg: &str| PhraseError::InvalidModel(msg.to_string());
        let order: Vec<PhraseLabel> = file
            .states
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_, _>>()?;
        let mut sorted = order.clone();
        sorted.sort();
        sorted.dedup();
        if order.len() != 4 || sorted.len() != 4 {
            return Err(bad("states must list B, M, E, S exactly once"));
        }
        // Re-index from the file's state order into the canonical order.
        if file.log_init.len() != 4 || file.log_trans.len() != 4 {
            return Err(bad("log_init and log_trans must have 4 entries"));
        }
        let mut log_init = [f64::NEG_INFINITY; 4];
        let mut log_trans = [[f64::NEG_INFINITY; 4]; 4];
        for (i, from) in order.iter().enumerate() {
            log_init[from.state()] = file.log_init[i].0;
            if file.log_trans[i].len() != 4 {
                return Err(bad("log_trans rows must have 4 entries"));
            }
            for (j, to) in order.iter().enumerate() {
                log_trans[from.state()][to.state()] = file.log_trans[i][j].0;
            }
        }
        let mut log_emit: [BTreeMap<char, f64>; 4] = Default::default();
        for (name, table) in file.log_emit {
            let state: PhraseLabel = name.parse()?;
            log_emit[state.state()] = table.into_iter().map(|(c, v)| (c, v.0)).collect();
        }
        Ok(HmmModel {
            log_init,
            log_trans,
            log_emit,
            unk_log_floor: file.unk_log_floor.0,
            smoothing: file.smoothing,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::PhraseLabel::{B as LB, E as LE, M as LM, S as LS};
    use super::*;

    const B: usize = 0;
    const M: usize = 1;

    const TOY: &str = include_str!("../data/phrase_corpus.txt");

    #[test]
    fn segmentation_labels() {
        assert_eq!(
            labels_from_segmentation(&["你好", "吗"]).unwrap(),
            [LB, LE, LS]
        );
        assert_eq!(labels_from_segmentation(&["我"]).unwrap(), [LS]);
        assert_eq!(
            labels_from_segmentation(&["中华民族"]).unwrap(),
            [LB, LM, LM, LE]
        );
        assert_eq!(
            labels_from_segmentation(&["我", ""]),
            Err(PhraseError::EmptyGroup(1))
        );
    }

    #[test]
    fn numeric_codes() {
        assert_eq!(labels_to_numeric(&[LB, LE]), [2, 4]);
        assert_eq!(labels_to_numeric(&[LS]), [1]);
        assert_eq!(labels_to_numeric(&[LB, LM, LE]), [2, 3, 4]);
        for l in [LS, LB, LM, LE] {
            assert_eq!(PhraseLabel::from_code(l.code()), Some(l));
            assert_eq!(PhraseLabel::from_state(l.state()), l);
        }
    }

    #[test]
    fn grammar_check() {
        assert!(is_well_formed(&[LS]));
        assert!(is_well_formed(&[LB, LE, LS, LB, LM, LM, LE]));
        assert!(!is_well_formed(&[]));
        assert!(!is_well_formed(&[LB]));
        assert!(!is_well_formed(&[LM, LE]));
        assert!(!is_well_formed(&[LB, LS]));
        assert!(!is_well_formed(&[LS, LE]));
    }

    #[test]
    fn spans_from_labels() {
        assert_eq!(phrase_spans(&[LB, LE, LS]), [(0, 2), (2, 1)]);
        assert_eq!(phrase_spans(&[LS, LB, LM, LE]), [(0, 1), (1, 3)]);
    }

    #[test]
    fn single_line_emission_counts() {
        let counts = HmmCounts::from_corpus("ab c").unwrap();
        assert_eq!(counts.emit[B].get(&'a'), Some(&1));
        assert_eq!(counts.emit[E].get(&'b'), Some(&1));
        assert_eq!(counts.emit[S].get(&'c'), Some(&1));
        assert_eq!(counts.emit[B].len(), 1);
        assert_eq!(counts.emit[E].len(), 1);
        assert_eq!(counts.emit[S].len(), 1);
        assert!(counts.emit[M].is_empty());
        assert_eq!(counts.init, [1, 0, 0, 0]);
    }

    #[test]
    fn two_line_transition_tally() {
        // line 1: a b c | d -> B M E S ; line 2: e | fg -> S B E
        let counts = HmmCounts::from_corpus("abc d\ne fg\n").unwrap();
        let mut expected = [[0u64; 4]; 4];
        expected[B][M] = 1;
        expected[M][E] = 1;
        expected[E][S] = 1;
        expected[S][B] = 1;
        expected[B][E] = 1;
        assert_eq!(counts.trans, expected);
        assert_eq!(counts.init, [1, 0, 0, 1]);
        assert_eq!(counts.sentences, 2);
    }

    #[test]
    fn smoothed_probabilities() {
        let alpha = 0.5;
        let model = HmmModel::train("abc d\ne fg\n", alpha).unwrap();
        model.validate().unwrap();
        // B row: B->M 1, B->E 1 over 2 legal successors.
        let expect = ((1.0 + alpha) / (2.0 + 2.0 * alpha)).ln();
        assert!((model.log_trans[B][M] - expect).abs() < 1e-15);
        // E row: only E->S observed.
        assert!((model.log_trans[E][S] - ((1.0 + alpha) / (1.0 + 2.0 * alpha)).ln()).abs() < 1e-15);
        assert!((model.log_trans[E][B] - (alpha / (1.0 + 2.0 * alpha)).ln()).abs() < 1e-15);
        // S emits d, e over a vocab of 7 characters.
        let p = ((1.0 + alpha) / (2.0 + 7.0 * alpha)).ln();
        assert!((model.emission(S, 'd') - p).abs() < 1e-15);
        let floor = (alpha / (7.0 + 7.0 * alpha)).ln();
        assert!((model.unk_log_floor - floor).abs() < 1e-15);
        assert_eq!(model.emission(S, 'z'), model.unk_log_floor);
    }

    #[test]
    fn structural_zeros() {
        let model = HmmModel::train(TOY, DEFAULT_SMOOTHING).unwrap();
        for from in 0..4 {
            for to in 0..4 {
                assert_eq!(
                    model.log_trans[from][to] == f64::NEG_INFINITY,
                    !LEGAL_TRANS[from][to]
                );
            }
        }
        assert_eq!(model.log_trans[B][S], f64::NEG_INFINITY);
        assert_eq!(model.log_init[M], f64::NEG_INFINITY);
        assert_eq!(model.log_init[E], f64::NEG_INFINITY);
        model.validate().unwrap();
    }

    #[test]
    fn training_errors() {
        assert_eq!(HmmModel::train("", 1e-3), Err(PhraseError::EmptyCorpus));
        assert_eq!(HmmModel::train("\n  \n", 1e-3), Err(PhraseError::EmptyCorpus));
        assert_eq!(
            HmmModel::train("ab  c", 1e-3),
            Err(PhraseError::EmptyPhrase { line: 1 })
        );
        assert_eq!(
            HmmModel::train("ab c", 0.0),
            Err(PhraseError::BadSmoothing(0.0))
        );
    }

    #[test]
    fn viterbi_single_char_is_s() {
        let model = HmmModel::train(TOY, DEFAULT_SMOOTHING).unwrap();
        assert_eq!(viterbi(&model, &['好']), [LS]);
        assert_eq!(viterbi(&model, &['龘']), [LS]);
    }

    #[test]
    fn viterbi_recovers_training_segmentation() {
        let model = HmmModel::train(TOY, DEFAULT_SMOOTHING).unwrap();
        let chars: Vec<char> = "中国人在家吃菜".chars().collect();
        let labels = viterbi(&model, &chars);
        let ann = PhraseAnnotation::from_labels(chars, labels);
        assert_eq!(ann.phrases(), ["中国人", "在", "家", "吃菜"]);
    }

    #[test]
    fn annotate_strips_non_cjk() {
        let model = HmmModel::train(TOY, DEFAULT_SMOOTHING).unwrap();
        let ann = annotate(&model, "你好，吗?").unwrap();
        assert_eq!(ann.chars, ['你', '好', '吗']);
        assert_eq!(ann.numeric.len(), 3);
        let ann = annotate(&model, "我").unwrap();
        assert_eq!(ann.phrase_spans, [(0, 1)]);
        assert_eq!(ann.labels, [LS]);
        assert_eq!(ann.numeric, [1]);
        assert_eq!(annotate(&model, "abc, 123!"), Err(PhraseError::EmptyText));
        assert_eq!(annotate(&model, ""), Err(PhraseError::EmptyText));
    }

    #[test]
    fn phoneme_level_expansion() {
        let ann = PhraseAnnotation::from_labels(vec!['我'], vec![LS]);
        assert_eq!(labels_to_phoneme_level(&ann, &[(0, 2)]).unwrap(), [1, 1]);
        assert_eq!(labels_to_phoneme_level(&ann, &[(0, 1)]).unwrap(), [1]);
        let ann = PhraseAnnotation::from_labels(vec!['你', '好'], vec![LB, LE]);
        assert_eq!(
            labels_to_phoneme_level(&ann, &[(0, 2), (2, 2)]).unwrap(),
            [2, 2, 4, 4]
        );
        assert_eq!(
            labels_to_phoneme_level(&ann, &[(0, 2)]),
            Err(PhraseError::CountMismatch { chars: 2, spans: 1 })
        );
        assert_eq!(
            phoneme_phrase_spans(&ann, &[(0, 2), (2, 1)]).unwrap(),
            [(0, 3)]
        );
    }

    #[test]
    fn model_json_roundtrip() {
        let model = HmmModel::train(TOY, DEFAULT_SMOOTHING).unwrap();
        let json = model.to_json();
        assert!(json.contains("\"-inf\""));
        let back = HmmModel::from_json(&json).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn model_json_rejects_broken_structure() {
        let model = HmmModel::train(TOY, DEFAULT_SMOOTHING).unwrap();
        let mut value: serde_json::Value = serde_json::from_str(&model.to_json()).unwrap();
        value["log_trans"][0][0] = serde_json::json!(-1.0);
        let err = HmmModel::from_json(&value.to_string()).unwrap_err();
        assert!(matches!(err, PhraseError::InvalidModel(_)));
        assert!(HmmModel::from_json("{}").is_err());
    }
}
