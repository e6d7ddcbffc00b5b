//! Audio loading and resampling.

use std::path::Path;

use crate::error::{Error, Result};

pub const TARGET_SAMPLE_RATE: u32 = 16_000;

/// Mono PCM audio held as f64 samples in [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Read a WAV file, mix to mono, and resample to 16 kHz.
pub fn load_wav(path: &Path) -> Result<AudioClip> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Audio(format!("{}: zero channels", path.display())));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => {
            reader.samples::<f32>().map(|s| s.map(f64::from)).collect::<std::result::Result<_, _>>()?
        }
        (hound::SampleFormat::Int, bits) if bits <= 32 => {
            let scale = 1.0 / (1i64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()?
        }
        (fmt, bits) => {
            return Err(Error::Audio(format!(
                "{}: unsupported sample format {fmt:?}/{bits}-bit",
                path.display()
            )));
        }
    };

    let n_frames = interleaved.len() / channels;
    let mono: Vec<f64> = (0..n_frames)
        .map(|i| interleaved[i * channels..(i + 1) * channels].iter().sum::<f64>() / channels as f64)
        .collect();

    let clip = AudioClip::new(mono, spec.sample_rate);
    resample(&clip, TARGET_SAMPLE_RATE)
}

/// Resample to `target_rate`. Downsampling applies an anti-alias lowpass
/// first; interpolation is linear, which is adequate for speech features at
/// these rates.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if clip.sample_rate == target_rate {
        return Ok(clip.clone());
    }
    if clip.samples.is_empty() {
        return Ok(AudioClip::new(Vec::new(), target_rate));
    }
    let src = if target_rate < clip.sample_rate {
        // cut just below the new Nyquist
        let cutoff = 0.45 * target_rate as f64;
        let spec = super::filter::butter_lowpass(4, cutoff, clip.sample_rate)?;
        let filtered = super::filter::zero_phase_filter_samples(&clip.samples, &spec)?;
        AudioClip::new(filtered, clip.sample_rate)
    } else {
        clip.clone()
    };

    let ratio = src.sample_rate as f64 / target_rate as f64;
    let n_out = ((src.samples.len() as f64) / ratio).floor() as usize;
    let mut out = Vec::with_capacity(n_out);
    for i in 0..n_out {
        let pos = i as f64 * ratio;
        let j = pos.floor() as usize;
        let frac = pos - j as f64;
        let a = src.samples[j];
        let b = if j + 1 < src.samples.len() { src.samples[j + 1] } else { a };
        out.push(a + frac * (b - a));
    }
    Ok(AudioClip::new(out, target_rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_wav_roundtrip_16k_i16() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        let samples: Vec<f64> = (0..1600)
            .map(|n| 0.5 * (std::f64::consts::TAU * 440.0 * n as f64 / 16_000.0).sin())
            .collect();
        for &s in &samples {
            w.write_sample((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16).unwrap();
        }
        w.finalize().unwrap();

        let clip = load_wav(&path).unwrap();
        assert_eq!(clip.sample_rate, 16_000);
        assert_eq!(clip.samples.len(), 1600);
        let max_err = clip
            .samples
            .iter()
            .zip(&samples)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(max_err < 1.0 / 32768.0, "quantisation only, got {max_err}");
    }

    #[test]
    fn missing_file_is_reported() {
        let err = load_wav(Path::new("/nonexistent/x.wav")).unwrap_err();
        assert!(matches!(err, Error::Missing(_)));
    }

    #[test]
    fn upsample_preserves_duration() {
        let clip = AudioClip::new(vec![0.0; 8000], 8000);
        let out = resample(&clip, 16_000).unwrap();
        assert_eq!(out.sample_rate, 16_000);
        assert!((out.duration_secs() - clip.duration_secs()).abs() < 1e-3);
    }

    #[test]
    fn downsample_tone_survives() {
        // 440 Hz at 48 kHz -> 16 kHz should stay a clean 440 Hz tone
        let sr = 48_000u32;
        let samples: Vec<f64> = (0..sr as usize)
            .map(|n| (std::f64::consts::TAU * 440.0 * n as f64 / sr as f64).cos())
            .collect();
        let out = resample(&AudioClip::new(samples, sr), 16_000).unwrap();
        assert_eq!(out.sample_rate, 16_000);
        assert_eq!(out.samples.len(), 16_000);
        // correlate against the expected tone away from the edges
        let mut dot = 0.0;
        let mut norm = 0.0;
        for n in 2000..14_000usize {
            let t = (std::f64::consts::TAU * 440.0 * n as f64 / 16_000.0).cos();
            dot += out.samples[n] * t;
            norm += t * t;
        }
        let gain = dot / norm;
        assert!((gain - 1.0).abs() < 0.05, "tone gain {gain}");
    }
}
