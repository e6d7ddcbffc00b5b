//! STFT and log-Mel spectrogram extraction.
//!
//! Framing uses centred reflect padding (n_fft/2 samples each side) with a
//! periodic Hann window, so a clip of n samples yields ⌊n/hop⌋ + 1 frames.
//! The filterbank is HTK-scale Mel (2595·log10(1 + f/700)) with triangular
//! weights linear in Hz between mel-spaced corner frequencies, 0–8000 Hz.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::autograd::Tensor;
use crate::error::{Error, Result};

use super::audio::AudioClip;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StftSpec {
    pub n_fft: usize,
    pub win_length: usize,
    pub hop_length: usize,
}

impl Default for StftSpec {
    fn default() -> Self {
        Self { n_fft: 1024, win_length: 1024, hop_length: 256 }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MelSpec {
    pub stft: StftSpec,
    pub n_mels: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub log_floor: f64,
    pub sample_rate: u32,
}

impl Default for MelSpec {
    fn default() -> Self {
        Self {
            stft: StftSpec::default(),
            n_mels: 256,
            fmin_hz: 0.0,
            fmax_hz: 8000.0,
            log_floor: 1e-10,
            sample_rate: 16_000,
        }
    }
}

/// Log-Mel energies, shape [n_mels, T_frames].
#[derive(Clone, Debug, PartialEq)]
pub struct MelFeature {
    pub data: Tensor,
}

impl MelFeature {
    pub fn n_mels(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn n_frames(&self) -> usize {
        self.data.shape()[1]
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Frames produced for a padded signal of `n_padded` samples.
pub fn frame_count(n_padded: usize, win_length: usize, hop_length: usize) -> usize {
    assert!(n_padded >= win_length);
    (n_padded - win_length) / hop_length + 1
}

/// Triangle centre frequencies in Hz, one per Mel bank.
pub fn filterbank_centers_hz(spec: &MelSpec) -> Vec<f64> {
    corner_frequencies(spec)[1..=spec.n_mels].to_vec()
}

fn corner_frequencies(spec: &MelSpec) -> Vec<f64> {
    let lo = hz_to_mel(spec.fmin_hz);
    let hi = hz_to_mel(spec.fmax_hz);
    let n = spec.n_mels + 2;
    (0..n)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Dense filterbank matrix [n_mels, n_fft/2 + 1].
pub fn mel_filterbank(spec: &MelSpec) -> Tensor {
    let n_bins = spec.stft.n_fft / 2 + 1;
    let corners = corner_frequencies(spec);
    let bin_hz: Vec<f64> =
        (0..n_bins).map(|k| k as f64 * spec.sample_rate as f64 / spec.stft.n_fft as f64).collect();
    let mut fb = Tensor::zeros(&[spec.n_mels, n_bins]);
    for m in 0..spec.n_mels {
        let (lo, ce, hi) = (corners[m], corners[m + 1], corners[m + 2]);
        for (k, &f) in bin_hz.iter().enumerate() {
            let rising = (f - lo) / (ce - lo);
            let falling = (hi - f) / (hi - ce);
            let w = rising.min(falling).max(0.0);
            fb.data_mut()[m * n_bins + k] = w;
        }
    }
    fb
}

fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    assert!(n > pad, "signal too short to reflect-pad");
    let mut out = Vec::with_capacity(n + 2 * pad);
    for i in 0..pad {
        out.push(x[pad - i]);
    }
    out.extend_from_slice(x);
    for i in 0..pad {
        out.push(x[n - 2 - i]);
    }
    out
}

/// STFT power spectrum, shape [n_bins, T_frames]. Centred framing.
pub fn stft_power(x: &[f64], stft: &StftSpec) -> Vec<Vec<f64>> {
    let n_fft = stft.n_fft;
    let win = stft.win_length;
    let hop = stft.hop_length;
    let padded = reflect_pad(x, n_fft / 2);
    let t_frames = frame_count(padded.len(), win, hop);

    let window: Vec<f64> =
        (0..win).map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / win as f64).cos()).collect();

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n_fft);
    let n_bins = n_fft / 2 + 1;
    let mut out = vec![vec![0.0; t_frames]; n_bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for t in 0..t_frames {
        let start = t * hop;
        for i in 0..n_fft {
            let v = if i < win { padded[start + i] * window[i] } else { 0.0 };
            buf[i] = Complex64::new(v, 0.0);
        }
        fft.process(&mut buf);
        for (k, row) in out.iter_mut().enumerate() {
            row[t] = buf[k].norm_sqr();
        }
    }
    out
}

fn validate(clip: &AudioClip, spec: &MelSpec) -> Result<()> {
    if clip.sample_rate != spec.sample_rate {
        return Err(Error::Audio(format!(
            "clip sample rate {} does not match the configured {}",
            clip.sample_rate, spec.sample_rate
        )));
    }
    if clip.samples.len() < spec.stft.win_length {
        return Err(Error::Audio(format!(
            "clip of {} samples is shorter than one window ({}); pad or reject it",
            clip.samples.len(),
            spec.stft.win_length
        )));
    }
    Ok(())
}

/// Pre-log Mel energies [n_mels, T]. Doubling the input amplitude multiplies
/// every entry by exactly 4.
pub fn mel_energies(clip: &AudioClip, spec: &MelSpec) -> Result<Tensor> {
    validate(clip, spec)?;
    let power = stft_power(&clip.samples, &spec.stft);
    let t_frames = power[0].len();
    let fb = mel_filterbank(spec);
    let n_bins = power.len();
    let mut out = Tensor::zeros(&[spec.n_mels, t_frames]);
    for m in 0..spec.n_mels {
        let wrow = &fb.data()[m * n_bins..(m + 1) * n_bins];
        for t in 0..t_frames {
            let mut acc = 0.0;
            for (k, row) in power.iter().enumerate() {
                let w = wrow[k];
                if w != 0.0 {
                    acc += w * row[t];
                }
            }
            out.data_mut()[m * t_frames + t] = acc;
        }
    }
    Ok(out)
}

/// Log-compressed Mel spectrogram: ln(max(energy, log_floor)).
pub fn mel_spectrogram(clip: &AudioClip, spec: &MelSpec) -> Result<MelFeature> {
    let mut e = mel_energies(clip, spec)?;
    let floor = spec.log_floor;
    for v in e.data_mut() {
        *v = v.max(floor).ln();
    }
    debug_assert!(e.all_finite());
    Ok(MelFeature { data: e })
}

/// Fix the frame axis to exactly `t_max` columns, padding with the log-floor
/// value (silence level) on the right or truncating.
pub fn pad_or_truncate_frames(feature: &MelFeature, t_max: usize, spec: &MelSpec) -> MelFeature {
    let (n_mels, t) = (feature.n_mels(), feature.n_frames());
    let fill = spec.log_floor.ln();
    let mut out = Tensor::full(&[n_mels, t_max], fill);
    let copy = t.min(t_max);
    for m in 0..n_mels {
        for j in 0..copy {
            out.data_mut()[m * t_max + j] = feature.data.data()[m * t + j];
        }
    }
    MelFeature { data: out }
}
