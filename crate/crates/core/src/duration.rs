//! Phrase-level duration aggregation.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DurationError {
    #[error("spans do not partition 0..{len}: span ({start}, {span_len}) breaks the cover")]
    NotAPartition {
        len: usize,
        start: usize,
        span_len: usize,
    },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty duration vectors")]
    Empty,
    #[error("invalid duration {0:?}: durations are non-negative integer frame counts")]
    BadValue(String),
}

/// Frame counts per phoneme.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DurationVector(pub Vec<u64>);

/// Frame counts per phrase.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PhraseDurationVector(pub Vec<u64>);

impl DurationVector {
    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    /// Parse a comma-separated list such as `"2,3,4,1"`. Fractional or
    /// negative values are rejected.
    pub fn parse_csv(text: &str) -> Result<Self, DurationError> {
        let text = text.trim();
        if text.is_empty() {
            return Ok(DurationVector::default());
        }
        text.split(',')
            .map(|v| {
                let v = v.trim();
                v.parse::<u64>()
                    .map_err(|_| DurationError::BadValue(v.to_string()))
            })
            .collect::<Result<_, _>>()
            .map(DurationVector)
    }
}

impl PhraseDurationVector {
    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
}

/// Check that `spans` cover `0..len` in order with no gaps or overlaps.
pub fn check_partition(spans: &[(usize, usize)], len: usize) -> Result<(), DurationError> {
    let mut cursor = 0;
    for &(start, span_len) in spans {
        if start != cursor || span_len == 0 || start + span_len > len {
            return Err(DurationError::NotAPartition {
                len,
                start,
                span_len,
            });
        }
        cursor += span_len;
    }
    if cursor != len {
        return Err(DurationError::NotAPartition {
            len,
            start: cursor,
            span_len: 0,
        });
    }
    Ok(())
}

/// Sum phoneme durations inside each phrase span.
pub fn aggregate_duration(
    durations: &DurationVector,
    phoneme_phrase_spans: &[(usize, usize)],
) -> Result<PhraseDurationVector, DurationError> {
    check_partition(phoneme_phrase_spans, durations.0.len())?;
    Ok(PhraseDurationVector(
        phoneme_phrase_spans
            .iter()
            .map(|&(start, len)| durations.0[start..start + len].iter().sum())
            .collect(),
    ))
}

/// Mean squared error between predicted and target phrase durations, in
/// frames squared.
pub fn phrase_duration_penalty(
    pred: &PhraseDurationVector,
    target: &PhraseDurationVector,
) -> Result<f64, DurationError> {
    if pred.0.len() != target.0.len() {
        return Err(DurationError::LengthMismatch(pred.0.len(), target.0.len()));
    }
    if pred.0.is_empty() {
        return Err(DurationError::Empty);
    }
    let sum: f64 = pred
        .0
        .iter()
        .zip(&target.0)
        .map(|(&p, &t)| {
            let d = p as f64 - t as f64;
            d * d
        })
        .sum();
    Ok(sum / pred.0.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn aggregate_examples() {
        let d = DurationVector(vec![2, 3, 4, 1]);
        assert_eq!(
            aggregate_duration(&d, &[(0, 2), (2, 2)]).unwrap(),
            PhraseDurationVector(vec![5, 5])
        );
        let singles: Vec<_> = (0..4).map(|i| (i, 1)).collect();
        assert_eq!(aggregate_duration(&d, &singles).unwrap().0, d.0);
    }

    #[test]
    fn aggregate_rejects_bad_spans() {
        let d = DurationVector(vec![1, 2, 3]);
        assert!(aggregate_duration(&d, &[(0, 2)]).is_err());
        assert!(aggregate_duration(&d, &[(0, 2), (1, 2)]).is_err());
        assert!(aggregate_duration(&d, &[(0, 2), (2, 2)]).is_err());
        assert!(aggregate_duration(&d, &[(0, 0), (0, 3)]).is_err());
        assert!(aggregate_duration(&DurationVector::default(), &[]).is_ok());
    }

    #[test]
    fn penalty_examples() {
        let a = PhraseDurationVector(vec![5]);
        let b = PhraseDurationVector(vec![7]);
        assert_eq!(phrase_duration_penalty(&a, &b).unwrap(), 4.0);
        assert_eq!(phrase_duration_penalty(&a, &a).unwrap(), 0.0);
        assert_eq!(
            phrase_duration_penalty(&a, &PhraseDurationVector(vec![1, 2])),
            Err(DurationError::LengthMismatch(1, 2))
        );
        let empty = PhraseDurationVector::default();
        assert_eq!(
            phrase_duration_penalty(&empty, &empty),
            Err(DurationError::Empty)
        );
    }

    #[test]
    fn parse_rejects_fractions() {
        assert_eq!(
            DurationVector::parse_csv("2,3,4,1").unwrap().0,
            [2, 3, 4, 1]
        );
        assert!(DurationVector::parse_csv("2,3.5").is_err());
        assert!(DurationVector::parse_csv("-1").is_err());
    }

    fn durations_and_spans() -> impl Strategy<Value = (Vec<u64>, Vec<(usize, usize)>)> {
        prop::collection::vec((0u64..500, any::<bool>()), 1..60).prop_map(|items| {
            let durations: Vec<u64> = items.iter().map(|(d, _)| *d).collect();
            let mut spans = Vec::new();
            let mut start = 0;
            for (i, (_, cut)) in items.iter().enumerate() {
                if *cut || i + 1 == items.len() {
                    spans.push((start, i + 1 - start));
                    start = i + 1;
                }
            }
            (durations, spans)
        })
    }

    proptest! {
        #[test]
        fn conservation((d, spans) in durations_and_spans()) {
            let d = DurationVector(d);
            let agg = aggregate_duration(&d, &spans).unwrap();
            prop_assert_eq!(agg.total(), d.total());
            prop_assert_eq!(agg.0.len(), spans.len());
        }

        #[test]
        fn penalty_zero_iff_equal(a in prop::collection::vec(0u64..50, 1..10), b in prop::collection::vec(0u64..50, 1..10)) {
            let n = a.len().min(b.len());
            let a = PhraseDurationVector(a[..n].to_vec());
            let b = PhraseDurationVector(b[..n].to_vec());
            let p = phrase_duration_penalty(&a, &b).unwrap();
            prop_assert!(p >= 0.0);
            prop_assert_eq!(p == 0.0, a == b);
            let direct: f64 = a.0.iter().zip(&b.0).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum::<f64>() / n as f64;
            prop_assert_eq!(p, direct);
        }
    }
}
