use std::collections::BTreeMap;

use amnet_core::phrase::{
    annotate, is_well_formed, labels_from_segmentation, labels_to_numeric, phrase_spans, viterbi, HmmModel,
    PhraseError, PhraseLabel, DEFAULT_SMOOTHING, LEGAL_START, LEGAL_TRANS,
};
use amnet_oracle as oracle;
use proptest::prelude::*;

const CORPUS: &str = include_str!("../data/phrase_corpus.txt");
const CHARS: [char; 6] = ['天', '气', '很', '好', '吗', '呢'];

fn model_from(init: [f64; 4], trans: [[f64; 4]; 4], emit: Vec<f64>, floor: f64) -> HmmModel {
    let mut log_init = [f64::NEG_INFINITY; 4];
    let mut log_trans = [[f64::NEG_INFINITY; 4]; 4];
    for s in 0..4 {
        if LEGAL_START[s] {
            log_init[s] = init[s];
        }
        for t in 0..4 {
            if LEGAL_TRANS[s][t] {
                log_trans[s][t] = trans[s][t];
            }
        }
    }
    let mut log_emit: [BTreeMap<char, f64>; 4] = Default::default();
    for (s, table) in log_emit.iter_mut().enumerate() {
        for (i, &c) in CHARS[..CHARS.len() - 1].iter().enumerate() {
            table.insert(c, emit[s * CHARS.len() + i]);
        }
    }
    HmmModel {
        log_init,
        log_trans,
        log_emit,
        unk_log_floor: floor,
        smoothing: 1.0,
    }
}

fn log_prob() -> impl Strategy<Value = f64> {
    prop_oneof![(0u8..3).prop_map(|k| -(k as f64)), (0.01f64..1.0).prop_map(f64::ln)]
}

fn random_model() -> impl Strategy<Value = HmmModel> {
    (
        prop::array::uniform4(log_prob()),
        prop::array::uniform4(prop::array::uniform4(log_prob())),
        prop::collection::vec(log_prob(), 4 * CHARS.len()),
        log_prob(),
    )
        .prop_map(|(i, t, e, f)| model_from(i, t, e, f))
}

fn emissions(model: &HmmModel, text: &[char]) -> Vec<[f64; 4]> {
    text.iter().map(|&c| std::array::from_fn(|s| model.emission(s, c))).collect()
}

fn code(label: PhraseLabel) -> u8 {
    match label {
        PhraseLabel::S => 1,
        PhraseLabel::B => 2,
        PhraseLabel::M => 3,
        PhraseLabel::E => 4,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn viterbi_agrees_with_exhaustive_search(
        model in random_model(),
        text in prop::collection::vec(prop::sample::select(CHARS.to_vec()), 1..9),
    ) {
        let want = oracle::best_path(&model.log_init, &model.log_trans, &emissions(&model, &text));
        let got: Vec<usize> = viterbi(&model, &text).iter().map(|l| l.state()).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn decoded_labels_are_well_formed(
        model in random_model(),
        text in prop::collection::vec(prop::sample::select(CHARS.to_vec()), 1..40),
    ) {
        let labels = viterbi(&model, &text);
        prop_assert_eq!(labels.len(), text.len());
        prop_assert!(is_well_formed(&labels));
        let numeric: Vec<u8> = labels.iter().map(|&l| code(l)).collect();
        prop_assert_eq!(labels_to_numeric(&labels), numeric);
        let spans = phrase_spans(&labels);
        prop_assert_eq!(spans.iter().map(|s| s.1).sum::<usize>(), text.len());
    }

    #[test]
    fn segmentation_labels_roundtrip(words in prop::collection::vec("[天气很好吗]{1,5}", 1..8)) {
        let labels = labels_from_segmentation(&words).unwrap();
        prop_assert!(is_well_formed(&labels));
        let chars: Vec<char> = words.concat().chars().collect();
        let rebuilt: Vec<String> = phrase_spans(&labels)
            .iter()
            .map(|&(s, l)| chars[s..s + l].iter().collect())
            .collect();
        prop_assert_eq!(rebuilt, words);
    }
}

#[test]
fn trained_model_reproduces_a_training_sentence() {
    let model = HmmModel::train(CORPUS, DEFAULT_SMOOTHING).unwrap();
    model.validate().unwrap();
    let ann = annotate(&model, "我是中国人").unwrap();
    assert_eq!(ann.phrases(), ["我", "是", "中国人"]);
    assert_eq!(ann.numeric, [1, 1, 2, 3, 4]);
}

#[test]
fn punctuation_and_latin_are_ignored() {
    let model = HmmModel::train(CORPUS, DEFAULT_SMOOTHING).unwrap();
    let plain = annotate(&model, "你好吗").unwrap();
    let noisy = annotate(&model, "  你好，ok 吗？").unwrap();
    assert_eq!(plain, noisy);
    assert_eq!(annotate(&model, "，。abc"), Err(PhraseError::EmptyText));
}

#[test]
fn unseen_characters_still_decode() {
    let model = HmmModel::train(CORPUS, DEFAULT_SMOOTHING).unwrap();
    let ann = annotate(&model, "鑫淼犇").unwrap();
    assert_eq!(ann.labels.len(), 3);
    assert!(is_well_formed(&ann.labels));
}

#[test]
fn model_json_roundtrip_preserves_decoding() {
    let model = HmmModel::train(CORPUS, 0.01).unwrap();
    let back = HmmModel::from_json(&model.to_json()).unwrap();
    assert_eq!(back, model);
    for text in ["今天天气很好", "他们不怕"] {
        assert_eq!(annotate(&back, text).unwrap(), annotate(&model, text).unwrap());
    }
}

#[test]
fn training_input_errors() {
    assert_eq!(HmmModel::train("", 1e-3), Err(PhraseError::EmptyCorpus));
    assert!(matches!(HmmModel::train("你好  吗", 1e-3), Err(PhraseError::EmptyPhrase { line: 1 })));
    assert!(matches!(HmmModel::train("你好", 0.0), Err(PhraseError::BadSmoothing(_))));
    assert!(matches!(HmmModel::train("你好", f64::NAN), Err(PhraseError::BadSmoothing(_))));
    assert!(HmmModel::from_json("{}").is_err());
}

#[test]
fn labels_codes_anchor() {
    use PhraseLabel::*;
    assert_eq!(labels_to_numeric(&[B, E]), [2, 4]);
    assert_eq!(labels_to_numeric(&[S]), [1]);
    assert_eq!(labels_to_numeric(&[B, M, M, E, S]), [2, 3, 3, 4, 1]);
    assert!(!is_well_formed(&[B]));
    assert!(!is_well_formed(&[M, E]));
    assert!(!is_well_formed(&[S, E]));
}
