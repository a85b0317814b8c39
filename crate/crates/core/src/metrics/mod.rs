//! Objective evaluation: WAV input, log-mel features, mel-cepstral
//! distortion, YIN pitch and R² goodness of fit.

mod cepstra;
mod mel;
mod wav;
mod yin;

pub use cepstra::{mcd, mel_cepstra, MelCepstra, MCD_SCALE, N_CEPSTRA};
pub use mel::{
    frame_count, hann_window, hz_to_mel, mel_filterbank, mel_spectrogram, mel_to_hz,
    ms_to_samples, MelConfig, MelSpectrogram, SAMPLE_RATE,
};
pub use wav::{read_wav, write_wav, WavAudio};
pub use yin::{cmndf, yin_f0, F0Track, YinConfig};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("wav: {0}")]
    Wav(String),
    #[error("sample rate {got} Hz, expected {expected} Hz")]
    SampleRate { expected: u32, got: u32 },
    #[error("signal of {samples} samples is shorter than one {needed}-sample window")]
    TooShort { samples: usize, needed: usize },
    #[error("{0} mel bands; at least 14 are needed for 13 cepstra")]
    TooFewBands(usize),
    #[error("no frames to compare")]
    NoFrames,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("target has zero variance")]
    DegenerateTarget,
    #[error("only {0} frames are voiced in both signals; need at least 2")]
    TooFewVoiced(usize),
    #[error("invalid config: {0}")]
    Config(String),
}

/// `1 - SS_res / SS_tot`.
pub fn r_squared(pred: &[f64], target: &[f64]) -> Result<f64, MetricsError> {
    if pred.len() != target.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), target.len()));
    }
    if target.len() < 2 {
        return Err(MetricsError::TooFewValues(target.len()));
    }
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let ss_tot: f64 = target.iter().map(|t| (t - mean) * (t - mean)).sum();
    if !(ss_tot > 0.0) {
        return Err(MetricsError::DegenerateTarget);
    }
    let ss_res: f64 = target
        .iter()
        .zip(pred)
        .map(|(t, p)| (t - p) * (t - p))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Feature configuration echoed in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportConfig {
    pub hop: usize,
    pub win: usize,
    pub n_mels: usize,
    pub n_cepstra: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mcd_db: f64,
    /// `None` when fewer than two frames are voiced in both signals or the
    /// reference pitch is constant.
    pub r2_f0: Option<f64>,
    pub frames_compared: usize,
    pub voiced_overlap: usize,
    pub config: ReportConfig,
}

/// Both pitch tracks truncated to their common length.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Pair {
    pub reference: F0Track,
    pub hypothesis: F0Track,
}

impl F0Pair {
    pub fn common_frames(&self) -> usize {
        self.reference.len().min(self.hypothesis.len())
    }

    /// `(ref, hyp)` values of frames voiced in both tracks.
    pub fn jointly_voiced(&self) -> (Vec<f64>, Vec<f64>) {
        self.reference.f0[..self.common_frames()]
            .iter()
            .zip(&self.hypothesis.f0)
            .filter(|(r, h)| **r > 0.0 && **h > 0.0)
            .map(|(r, h)| (*r, *h))
            .unzip()
    }

    /// `time_s,f0_ref_hz,f0_hyp_hz` rows over the common frames.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,f0_ref_hz,f0_hyp_hz\n");
        for f in 0..self.common_frames() {
            out.push_str(&format!(
                "{:.6},{:.6},{:.6}\n",
                self.reference.frame_time(f),
                self.reference.f0[f],
                self.hypothesis.f0[f]
            ));
        }
        out
    }
}

/// Evaluation pipeline over a reference and a synthesized signal.
#[derive(Debug, Clone, Default)]
pub struct Evaluator {
    pub mel: MelConfig,
    pub yin: YinConfig,
}

impl Evaluator {
    fn report_config(&self) -> ReportConfig {
        ReportConfig {
            hop: self.mel.hop_length,
            win: self.mel.win_length,
            n_mels: self.mel.n_mels,
            n_cepstra: N_CEPSTRA,
        }
    }

    pub fn cepstra(&self, wav: &WavAudio) -> Result<MelCepstra, MetricsError> {
        mel_cepstra(&mel_spectrogram(wav, &self.mel)?)
    }

    pub fn mcd(&self, reference: &WavAudio, hypothesis: &WavAudio) -> Result<f64, MetricsError> {
        mcd(&self.cepstra(reference)?, &self.cepstra(hypothesis)?)
    }

    pub fn f0_pair(&self, reference: &WavAudio, hypothesis: &WavAudio) -> Result<F0Pair, MetricsError> {
        Ok(F0Pair {
            reference: yin_f0(reference, &self.yin)?,
            hypothesis: yin_f0(hypothesis, &self.yin)?,
        })
    }

    /// MCD plus F0 R² over jointly voiced frames; R² is left empty when it
    /// is undefined for this pair.
    pub fn report(&self, reference: &WavAudio, hypothesis: &WavAudio) -> Result<EvalReport, MetricsError> {
        let mcd_db = self.mcd(reference, hypothesis)?;
        let pair = self.f0_pair(reference, hypothesis)?;
        let (r, h) = pair.jointly_voiced();
        let r2_f0 = r_squared(&h, &r).ok();
        Ok(EvalReport {
            mcd_db,
            r2_f0,
            frames_compared: pair.common_frames(),
            voiced_overlap: r.len(),
            config: self.report_config(),
        })
    }

    /// Like [`Self::report`] but fails when R² cannot be computed.
    pub fn f0_r2(&self, reference: &WavAudio, hypothesis: &WavAudio) -> Result<(EvalReport, F0Pair), MetricsError> {
        let pair = self.f0_pair(reference, hypothesis)?;
        let (r, h) = pair.jointly_voiced();
        if r.len() < 2 {
            return Err(MetricsError::TooFewVoiced(r.len()));
        }
        let r2 = r_squared(&h, &r)?;
        let report = EvalReport {
            mcd_db: self.mcd(reference, hypothesis)?,
            r2_f0: Some(r2),
            frames_compared: pair.common_frames(),
            voiced_overlap: r.len(),
            config: self.report_config(),
        };
        Ok((report, pair))
    }
}

/// [`Evaluator::f0_r2`] with the default configuration.
pub fn f0_r2(reference: &WavAudio, hypothesis: &WavAudio) -> Result<EvalReport, MetricsError> {
    Evaluator::default().f0_r2(reference, hypothesis).map(|(r, _)| r)
}
