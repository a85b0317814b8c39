//! YIN fundamental-frequency tracking on the mel frame grid.
//!
//! Frame `f` is centered at `f * hop + win / 2`, like the mel frame with the
//! same index. The analysis buffer spans `2 * win` samples around that center
//! (zero outside the signal) so the difference function over an integration
//! window of `win` samples has full support up to the longest lag.

use super::mel::{frame_count, MelConfig};
use super::wav::WavAudio;
use super::MetricsError;

#[derive(Debug, Clone, PartialEq)]
pub struct YinConfig {
    pub sample_rate: u32,
    pub fmin: f64,
    pub fmax: f64,
    pub threshold: f64,
    /// Frames whose smallest in-range CMNDF exceeds this are unvoiced.
    pub voicing_ceiling: f64,
    pub win_length: usize,
    pub hop_length: usize,
}

impl Default for YinConfig {
    fn default() -> Self {
        let mel = MelConfig::default();
        YinConfig {
            sample_rate: mel.sample_rate,
            fmin: 50.0,
            fmax: 600.0,
            threshold: 0.1,
            voicing_ceiling: 0.5,
            win_length: mel.win_length,
            hop_length: mel.hop_length,
        }
    }
}

impl YinConfig {
    /// Inclusive integer lag range `[ceil(sr/fmax), floor(sr/fmin)]`.
    pub fn lag_range(&self) -> (usize, usize) {
        let sr = self.sample_rate as f64;
        ((sr / self.fmax).ceil() as usize, (sr / self.fmin).floor() as usize)
    }

    fn validate(&self) -> Result<(), MetricsError> {
        let (lo, hi) = self.lag_range();
        if !(self.fmin > 0.0 && self.fmin < self.fmax) || lo < 2 || lo > hi {
            return Err(MetricsError::Config(format!(
                "invalid pitch range {}..{} Hz",
                self.fmin, self.fmax
            )));
        }
        if self.hop_length == 0 || self.win_length <= hi {
            return Err(MetricsError::Config(format!(
                "window {} too short for lag {hi}",
                self.win_length
            )));
        }
        Ok(())
    }
}

/// Per-frame f0 in Hz; 0 marks an unvoiced frame.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Track {
    pub hop_length: usize,
    pub win_length: usize,
    pub sample_rate: u32,
    pub f0: Vec<f64>,
}

impl F0Track {
    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    pub fn voiced_count(&self) -> usize {
        self.f0.iter().filter(|&&f| f > 0.0).count()
    }

    /// Center time of frame `f` in seconds.
    pub fn frame_time(&self, f: usize) -> f64 {
        (f * self.hop_length) as f64 / self.sample_rate as f64
            + (self.win_length / 2) as f64 / self.sample_rate as f64
    }
}

/// Cumulative-mean-normalized difference of `buf` for lags `0..=max_lag`,
/// integrating over the first `window` samples. Lag 0 maps to 1, as does any
/// lag whose running mean is zero.
pub fn cmndf(buf: &[f64], window: usize, max_lag: usize) -> Vec<f64> {
    assert!(window + max_lag <= buf.len());
    let mut out = vec![1.0; max_lag + 1];
    let mut running = 0.0;
    for tau in 1..=max_lag {
        let d: f64 = buf[..window]
            .iter()
            .zip(&buf[tau..tau + window])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        running += d;
        if running > 0.0 {
            out[tau] = d * tau as f64 / running;
        }
    }
    out
}

/// Best lag of one CMNDF curve, refined by parabolic interpolation, or
/// `None` when the frame is unvoiced.
fn pick_lag(d: &[f64], cfg: &YinConfig) -> Option<f64> {
    let (lo, hi) = cfg.lag_range();
    let (mut best, mut best_val) = (lo, f64::INFINITY);
    for tau in lo..=hi {
        if d[tau] < best_val {
            best_val = d[tau];
            best = tau;
        }
    }
    if best_val > cfg.voicing_ceiling {
        return None;
    }
    let mut tau = (lo..=hi).find(|&t| d[t] < cfg.threshold).unwrap_or(best);
    while tau < hi && d[tau + 1] < d[tau] {
        tau += 1;
    }
    let (a, b, c) = (d[tau - 1], d[tau], d[tau + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom > 0.0 {
        (0.5 * (a - c) / denom).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let sr = cfg.sample_rate as f64;
    Some((tau as f64 + shift).clamp(sr / cfg.fmax, sr / cfg.fmin))
}

pub fn yin_f0(wav: &WavAudio, cfg: &YinConfig) -> Result<F0Track, MetricsError> {
    cfg.validate()?;
    if wav.sample_rate != cfg.sample_rate {
        return Err(MetricsError::SampleRate {
            expected: cfg.sample_rate,
            got: wav.sample_rate,
        });
    }
    let win = cfg.win_length;
    let (_, hi) = cfg.lag_range();
    let frames = frame_count(wav.samples.len(), win, cfg.hop_length);
    let mut buf = vec![0.0; 2 * win];
    let mut f0 = Vec::with_capacity(frames);
    for f in 0..frames {
        let center = (f * cfg.hop_length + win / 2) as isize;
        let start = center - win as isize;
        for (i, slot) in buf.iter_mut().enumerate() {
            let pos = start + i as isize;
            *slot = if pos >= 0 && (pos as usize) < wav.samples.len() {
                wav.samples[pos as usize]
            } else {
                0.0
            };
        }
        let d = cmndf(&buf, win, hi + 1);
        f0.push(match pick_lag(&d, cfg) {
            Some(lag) => cfg.sample_rate as f64 / lag,
            None => 0.0,
        });
    }
    Ok(F0Track {
        hop_length: cfg.hop_length,
        win_length: win,
        sample_rate: cfg.sample_rate,
        f0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, seconds: f64) -> WavAudio {
        let n = (22050.0 * seconds) as usize;
        WavAudio {
            sample_rate: 22050,
            samples: (0..n)
                .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / 22050.0).sin())
                .collect(),
        }
    }

    fn median_voiced(track: &F0Track) -> f64 {
        let mut v: Vec<f64> = track.f0.iter().copied().filter(|&f| f > 0.0).collect();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }

    #[test]
    fn lag_range_default() {
        assert_eq!(YinConfig::default().lag_range(), (37, 441));
    }

    #[test]
    fn cmndf_starts_at_one() {
        let buf: Vec<f64> = (0..64).map(|i| (i as f64 * 0.3).sin()).collect();
        let d = cmndf(&buf, 32, 20);
        assert_eq!(d[0], 1.0);
        assert_eq!(cmndf(&[0.0; 40], 20, 10), vec![1.0; 11]);
    }

    #[test]
    fn tracks_a_sine() {
        let track = yin_f0(&sine(220.0, 1.0), &YinConfig::default()).unwrap();
        let m = median_voiced(&track);
        assert!((m - 220.0).abs() / 220.0 < 0.02, "median {m}");
        assert_eq!(track.len(), frame_count(22050, 1102, 276));
    }

    #[test]
    fn silence_is_unvoiced() {
        let wav = WavAudio {
            sample_rate: 22050,
            samples: vec![0.0; 22050],
        };
        let track = yin_f0(&wav, &YinConfig::default()).unwrap();
        assert!(!track.is_empty());
        assert_eq!(track.voiced_count(), 0);
    }

    #[test]
    fn wrong_rate() {
        let mut wav = sine(220.0, 0.2);
        wav.sample_rate = 44100;
        assert!(matches!(
            yin_f0(&wav, &YinConfig::default()),
            Err(MetricsError::SampleRate { .. })
        ));
    }
}
