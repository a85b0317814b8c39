//! Hann-windowed STFT magnitudes pooled by a triangular HTK mel filterbank.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::wav::WavAudio;
use super::MetricsError;

pub const SAMPLE_RATE: u32 = 22050;

/// `ms` milliseconds at `sample_rate`, rounded to the nearest sample with
/// ties to even (12.5 ms -> 276, 50 ms -> 1102 at 22.05 kHz).
pub fn ms_to_samples(ms: f64, sample_rate: u32) -> usize {
    (ms * sample_rate as f64 / 1000.0).round_ties_even() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub win_length: usize,
    pub hop_length: usize,
    pub fft_size: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            sample_rate: SAMPLE_RATE,
            win_length: ms_to_samples(50.0, SAMPLE_RATE),
            hop_length: ms_to_samples(12.5, SAMPLE_RATE),
            fft_size: 2048,
            n_mels: 80,
            fmin: 0.0,
            fmax: 8000.0,
            log_floor: 1e-10,
        }
    }
}

impl MelConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let bad = |m: String| Err(MetricsError::Config(m));
        if self.win_length == 0 || self.win_length > self.fft_size {
            return bad(format!(
                "win_length {} must be in 1..={}",
                self.win_length, self.fft_size
            ));
        }
        if self.hop_length == 0 {
            return bad("hop_length must be positive".into());
        }
        if self.n_mels == 0 {
            return bad("n_mels must be positive".into());
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= self.sample_rate as f64 / 2.0) {
            return bad(format!("invalid band {}..{} Hz", self.fmin, self.fmax));
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive".into());
        }
        Ok(())
    }
}

/// `1 + floor((n - win) / hop)`, or zero when the signal is shorter than
/// one window.
pub fn frame_count(n: usize, win: usize, hop: usize) -> usize {
    if n < win {
        0
    } else {
        1 + (n - win) / hop
    }
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
        .collect()
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// `n_mels x (fft_size/2 + 1)` triangular weights with unit peaks, centers
/// equally spaced on the mel scale between `fmin` and `fmax`.
pub fn mel_filterbank(cfg: &MelConfig) -> Vec<Vec<f64>> {
    let bins = cfg.fft_size / 2 + 1;
    let lo = hz_to_mel(cfg.fmin);
    let hi = hz_to_mel(cfg.fmax);
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    (0..cfg.n_mels)
        .map(|j| {
            let (left, center, right) = (edges[j], edges[j + 1], edges[j + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * cfg.sample_rate as f64 / cfg.fft_size as f64;
                    let rise = (f - left) / (center - left);
                    let fall = (right - f) / (right - center);
                    rise.min(fall).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Natural-log mel energies, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub n_mels: usize,
    pub frames: Vec<Vec<f64>>,
}

impl MelSpectrogram {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

pub fn mel_spectrogram(wav: &WavAudio, cfg: &MelConfig) -> Result<MelSpectrogram, MetricsError> {
    cfg.validate()?;
    if wav.sample_rate != cfg.sample_rate {
        return Err(MetricsError::SampleRate {
            expected: cfg.sample_rate,
            got: wav.sample_rate,
        });
    }
    let n = wav.samples.len();
    if n < cfg.win_length {
        return Err(MetricsError::TooShort {
            samples: n,
            needed: cfg.win_length,
        });
    }
    let window = hann_window(cfg.win_length);
    let filters = mel_filterbank(cfg);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.fft_size);
    let bins = cfg.fft_size / 2 + 1;
    let mut buffer = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    let mut magnitudes = vec![0.0; bins];
    let count = frame_count(n, cfg.win_length, cfg.hop_length);
    let mut frames = Vec::with_capacity(count);
    for f in 0..count {
        let start = f * cfg.hop_length;
        buffer.fill(Complex::new(0.0, 0.0));
        for (i, (s, w)) in wav.samples[start..start + cfg.win_length]
            .iter()
            .zip(&window)
            .enumerate()
        {
            buffer[i].re = s * w;
        }
        fft.process(&mut buffer);
        for (m, c) in magnitudes.iter_mut().zip(&buffer) {
            *m = c.norm();
        }
        frames.push(
            filters
                .iter()
                .map(|weights| {
                    let energy: f64 = weights.iter().zip(&magnitudes).map(|(w, m)| w * m).sum();
                    energy.max(cfg.log_floor).ln()
                })
                .collect(),
        );
    }
    Ok(MelSpectrogram {
        n_mels: cfg.n_mels,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn configured_frame_sizes() {
        let cfg = MelConfig::default();
        assert_eq!(cfg.hop_length, 276);
        assert_eq!(cfg.win_length, 1102);
        cfg.validate().unwrap();
    }

    #[test]
    fn framing_rule() {
        assert_eq!(frame_count(1102, 1102, 276), 1);
        assert_eq!(frame_count(1101, 1102, 276), 0);
        assert_eq!(frame_count(1102 + 276, 1102, 276), 2);
        assert_eq!(frame_count(1102 + 275, 1102, 276), 1);
    }

    #[test]
    fn single_window_gives_one_frame() {
        let cfg = MelConfig::default();
        let wav = WavAudio {
            sample_rate: 22050,
            samples: vec![0.1; cfg.win_length],
        };
        assert_eq!(mel_spectrogram(&wav, &cfg).unwrap().len(), 1);
    }

    #[test]
    fn silence_hits_floor() {
        let cfg = MelConfig::default();
        let wav = WavAudio {
            sample_rate: 22050,
            samples: vec![0.0; 3000],
        };
        let mel = mel_spectrogram(&wav, &cfg).unwrap();
        let floor = 1e-10f64.ln();
        assert!(mel.frames.iter().flatten().all(|&v| v == floor));
    }

    #[test]
    fn rejects_wrong_rate_and_short_signal() {
        let cfg = MelConfig::default();
        let wav = WavAudio {
            sample_rate: 16000,
            samples: vec![0.0; 3000],
        };
        assert!(matches!(
            mel_spectrogram(&wav, &cfg),
            Err(MetricsError::SampleRate { .. })
        ));
        let wav = WavAudio {
            sample_rate: 22050,
            samples: vec![0.0; 100],
        };
        assert!(matches!(
            mel_spectrogram(&wav, &cfg),
            Err(MetricsError::TooShort { .. })
        ));
    }

    #[test]
    fn mel_scale_roundtrip() {
        for hz in [0.0, 440.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn filters_peak_at_one() {
        let cfg = MelConfig::default();
        let bank = mel_filterbank(&cfg);
        assert_eq!(bank.len(), 80);
        for f in &bank {
            let peak = f.iter().cloned().fold(0.0, f64::max);
            assert!(peak > 0.3 && peak <= 1.0);
        }
    }
}
