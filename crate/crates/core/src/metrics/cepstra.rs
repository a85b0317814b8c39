//! Mel-cepstra and mel cepstral distortion.

use std::f64::consts::{LN_10, PI};

use super::mel::MelSpectrogram;
use super::MetricsError;

/// Coefficients kept per frame (c1..c13; c0 is dropped).
pub const N_CEPSTRA: usize = 13;

/// Per-frame coefficients `c1..c13`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelCepstra {
    pub frames: Vec<[f64; N_CEPSTRA]>,
}

impl MelCepstra {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Orthonormal DCT-II along the mel axis, keeping coefficients 1..=13.
pub fn mel_cepstra(mel: &MelSpectrogram) -> Result<MelCepstra, MetricsError> {
    let n = mel.n_mels;
    if n < N_CEPSTRA + 1 {
        return Err(MetricsError::TooFewBands(n));
    }
    let scale = (2.0 / n as f64).sqrt();
    let basis: Vec<Vec<f64>> = (1..=N_CEPSTRA)
        .map(|k| {
            (0..n)
                .map(|i| scale * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos())
                .collect()
        })
        .collect();
    let frames = mel
        .frames
        .iter()
        .map(|row| {
            if row.len() != n {
                return Err(MetricsError::Config(format!(
                    "mel frame has {} bands, expected {n}",
                    row.len()
                )));
            }
            let mut c = [0.0; N_CEPSTRA];
            for (dst, b) in c.iter_mut().zip(&basis) {
                *dst = b.iter().zip(row).map(|(w, x)| w * x).sum();
            }
            Ok(c)
        })
        .collect::<Result<_, _>>()?;
    Ok(MelCepstra { frames })
}

/// `10 / ln 10 * sqrt(2)`, the dB scale factor of the distortion.
pub const MCD_SCALE: f64 = 10.0 / LN_10 * std::f64::consts::SQRT_2;

/// Mean over frames of `(10/ln 10) * sqrt(2 * sum_d (c_d - c'_d)^2)`; the
/// longer sequence is truncated to the shorter.
pub fn mcd(reference: &MelCepstra, hypothesis: &MelCepstra) -> Result<f64, MetricsError> {
    let frames = reference.len().min(hypothesis.len());
    if frames == 0 {
        return Err(MetricsError::NoFrames);
    }
    let total: f64 = reference
        .frames
        .iter()
        .zip(&hypothesis.frames)
        .map(|(a, b)| {
            let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            (10.0 / LN_10) * (2.0 * sq).sqrt()
        })
        .sum();
    Ok(total / frames as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(rows: Vec<Vec<f64>>) -> MelSpectrogram {
        MelSpectrogram {
            n_mels: rows[0].len(),
            frames: rows,
        }
    }

    #[test]
    fn constant_row_has_zero_cepstra() {
        let c = mel_cepstra(&spec(vec![vec![-3.7; 80]])).unwrap();
        assert!(c.frames[0].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn too_few_bands() {
        assert_eq!(
            mel_cepstra(&spec(vec![vec![0.0; 13]])),
            Err(MetricsError::TooFewBands(13))
        );
        assert!(mel_cepstra(&spec(vec![vec![0.0; 14]])).is_ok());
    }

    #[test]
    fn linear_in_input() {
        let a: Vec<f64> = (0..80).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..80).map(|i| (i as f64 * 0.11).cos() * 2.0).collect();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 1.5 * x - 0.25 * y).collect();
        let ca = mel_cepstra(&spec(vec![a])).unwrap().frames[0];
        let cb = mel_cepstra(&spec(vec![b])).unwrap().frames[0];
        let cm = mel_cepstra(&spec(vec![mix])).unwrap().frames[0];
        for k in 0..N_CEPSTRA {
            assert!((cm[k] - (1.5 * ca[k] - 0.25 * cb[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn mcd_closed_forms() {
        let a = MelCepstra {
            frames: vec![[0.0; N_CEPSTRA]],
        };
        assert_eq!(mcd(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b.frames[0][4] = 1.0;
        assert!((mcd(&a, &b).unwrap() - MCD_SCALE).abs() < 1e-12);
        assert!((MCD_SCALE - 6.1418).abs() < 1e-4);
        let empty = MelCepstra { frames: vec![] };
        assert_eq!(mcd(&a, &empty), Err(MetricsError::NoFrames));
    }

    #[test]
    fn mcd_truncates_to_shorter() {
        let a = MelCepstra {
            frames: vec![[0.0; N_CEPSTRA]; 3],
        };
        let mut b = MelCepstra {
            frames: vec![[0.0; N_CEPSTRA]; 5],
        };
        b.frames[4][0] = 10.0;
        assert_eq!(mcd(&a, &b).unwrap(), 0.0);
    }
}
