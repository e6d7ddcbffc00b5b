//! Browser bindings for the preprocessing front end.
//!
//! Compiled to `wasm32-unknown-unknown` and loaded by `www/index.html`.
//! Everything here is plain Rust over the core crate, so the crate also
//! builds natively and its tests run with the rest of the workspace.

use wasm_bindgen::prelude::*;

use drsc::dataio::filter::{butter_bandpass, zero_phase_filter_samples, FilterSpec};
use drsc::dataio::mel::{mel_spectrogram, MelSpec};
use drsc::dataio::{corrupt_transcription, word_error_rate, AudioClip, CorruptionSpec};
use drsc::rng::SeededRng;

const SAMPLE_RATE: u32 = 16_000;

// ------------------------------------------------------------------ signals

fn synthesize(kind: &str, freq_hz: f64, seed: u64) -> Vec<f64> {
    let n = SAMPLE_RATE as usize; // one second
    let mut rng = SeededRng::new(seed);
    let dt = 1.0 / SAMPLE_RATE as f64;
    match kind {
        "chirp" => {
            // sweep from freq_hz up to 4x over the second
            (0..n)
                .map(|i| {
                    let t = i as f64 * dt;
                    let inst = freq_hz * (1.0 + 1.5 * t);
                    (std::f64::consts::TAU * inst * t).cos()
                })
                .collect()
        }
        "noise" => (0..n).map(|_| 0.3 * rng.normal()).collect(),
        "tone+noise" => (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                (std::f64::consts::TAU * freq_hz * t).cos() + 0.2 * rng.normal()
            })
            .collect(),
        // pure tone
        _ => (0..n).map(|i| (std::f64::consts::TAU * freq_hz * i as f64 * dt).cos()).collect(),
    }
}

/// Blue-to-yellow heat ramp over a normalised value in [0, 1].
fn heat(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let r = (255.0 * v.powf(0.7)).round() as u8;
    let g = (255.0 * v.powf(1.2)).round() as u8;
    let b = (90.0 + 120.0 * (1.0 - v)).round() as u8;
    [r, g, b]
}

/// A rendered mel spectrogram: RGBA pixels, one column per frame, one row
/// per mel bank (row 0 = highest bank so low frequencies sit at the bottom).
#[wasm_bindgen]
pub struct Heatmap {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    db_min: f64,
    db_max: f64,
}

#[wasm_bindgen]
impl Heatmap {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    #[wasm_bindgen(getter)]
    pub fn pixels(&self) -> Vec<u8> {
        self.pixels.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn db_min(&self) -> f64 {
        self.db_min
    }

    #[wasm_bindgen(getter)]
    pub fn db_max(&self) -> f64 {
        self.db_max
    }
}

/// Synthesize one second of test signal, run it through the zero-phase
/// speech band-pass and the 256-bank mel front end, and paint the result.
#[wasm_bindgen]
pub fn mel_heatmap(kind: &str, freq_hz: f64, seed: u64, filtered: bool) -> Result<Heatmap, JsError> {
    let mut samples = synthesize(kind, freq_hz.clamp(30.0, 7_800.0), seed);
    if filtered {
        samples = zero_phase_filter_samples(&samples, &FilterSpec::speech_band_default())
            .map_err(|e| JsError::new(&e.to_string()))?;
    }
    let clip = AudioClip::new(samples, SAMPLE_RATE);
    let mel = mel_spectrogram(&clip, &MelSpec::default()).map_err(|e| JsError::new(&e.to_string()))?;

    let (rows, cols) = (mel.n_mels(), mel.n_frames());
    let data = mel.data.data();
    let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);

    let mut pixels = vec![0u8; rows * cols * 4];
    for m in 0..rows {
        for t in 0..cols {
            let v = (data[m * cols + t] - lo) / span;
            let [r, g, b] = heat(v);
            // flip vertically: bank 0 at the bottom of the image
            let px = ((rows - 1 - m) * cols + t) * 4;
            pixels[px] = r;
            pixels[px + 1] = g;
            pixels[px + 2] = b;
            pixels[px + 3] = 255;
        }
    }
    Ok(Heatmap { width: cols, height: rows, pixels, db_min: lo, db_max: hi })
}

// ------------------------------------------------------------------ filters

/// Magnitude response curves for a Butterworth band-pass: the single
/// forward pass and the effective forward-backward (zero-phase) pass,
/// both in dB over log-spaced frequencies.
#[wasm_bindgen]
pub struct ResponseCurve {
    freqs_hz: Vec<f64>,
    single_db: Vec<f64>,
    zero_phase_db: Vec<f64>,
}

#[wasm_bindgen]
impl ResponseCurve {
    #[wasm_bindgen(getter)]
    pub fn freqs_hz(&self) -> Vec<f64> {
        self.freqs_hz.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn single_db(&self) -> Vec<f64> {
        self.single_db.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn zero_phase_db(&self) -> Vec<f64> {
        self.zero_phase_db.clone()
    }
}

/// |H(e^{jw})| from the difference-equation coefficients.
fn magnitude_at(spec: &FilterSpec, omega: f64) -> f64 {
    let eval = |c: &[f64]| {
        let mut re = 0.0;
        let mut im = 0.0;
        for (k, &ck) in c.iter().enumerate() {
            re += ck * (omega * k as f64).cos();
            im -= ck * (omega * k as f64).sin();
        }
        (re * re + im * im).sqrt()
    };
    eval(&spec.b) / eval(&spec.a).max(1e-300)
}

#[wasm_bindgen]
pub fn filter_response(
    low_hz: f64,
    high_hz: f64,
    order: usize,
    n_points: usize,
) -> Result<ResponseCurve, JsError> {
    let low = low_hz.clamp(10.0, 7_000.0);
    let high = high_hz.clamp(low + 10.0, 7_900.0);
    let order = order.clamp(1, 8);
    let n = n_points.clamp(16, 4096);
    let spec = butter_bandpass(order, low, high, SAMPLE_RATE).map_err(|e| JsError::new(&e.to_string()))?;

    let (f_lo, f_hi) = (10.0f64, 7_999.0f64);
    let mut freqs_hz = Vec::with_capacity(n);
    let mut single_db = Vec::with_capacity(n);
    let mut zero_phase_db = Vec::with_capacity(n);
    for i in 0..n {
        let f = f_lo * (f_hi / f_lo).powf(i as f64 / (n - 1) as f64);
        let omega = std::f64::consts::TAU * f / SAMPLE_RATE as f64;
        let mag = magnitude_at(&spec, omega).max(1e-12);
        freqs_hz.push(f);
        single_db.push(20.0 * mag.log10());
        // filtering forward then backward squares the magnitude response
        zero_phase_db.push(40.0 * mag.log10());
    }
    Ok(ResponseCurve { freqs_hz, single_db, zero_phase_db })
}

// --------------------------------------------------------------- corruption

/// One corruption round: the rewritten sentence plus its measured distance
/// from the original.
#[wasm_bindgen]
pub struct CorruptionResult {
    corrupted: String,
    wer: f64,
}

#[wasm_bindgen]
impl CorruptionResult {
    #[wasm_bindgen(getter)]
    pub fn corrupted(&self) -> String {
        self.corrupted.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn wer(&self) -> f64 {
        self.wer
    }
}

const FILLER_WORDS: &[&str] = &[
    "cough", "fever", "throat", "breath", "pain", "chest", "head", "dizzy", "nausea", "sore",
    "dry", "chills", "tired", "ache", "runny",
];

/// Corrupt a transcription toward `target_wer` and report the word error
/// rate actually achieved for this seed.
#[wasm_bindgen]
pub fn corrupt_live(text: &str, target_wer: f64, seed: u64) -> CorruptionResult {
    let mut vocab: Vec<String> = text
        .split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    vocab.extend(FILLER_WORDS.iter().map(|w| w.to_string()));

    let spec = CorruptionSpec { seed, ..CorruptionSpec::with_target(target_wer.clamp(0.0, 1.0)) };
    let corrupted = corrupt_transcription(text, &spec, &vocab);
    let wer = word_error_rate(text, &corrupted);
    CorruptionResult { corrupted, wer }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmaps_cover_every_signal_kind() {
        for kind in ["tone", "chirp", "noise", "tone+noise"] {
            let hm = mel_heatmap(kind, 440.0, 7, true).unwrap();
            assert_eq!(hm.height, 256);
            assert_eq!(hm.width, 63);
            assert_eq!(hm.pixels.len(), 256 * 63 * 4);
            assert!(hm.db_max > hm.db_min);
            assert!(hm.pixels.chunks(4).all(|px| px[3] == 255));
        }
    }

    #[test]
    fn tone_heatmap_brightest_near_the_tone_row() {
        let hm = mel_heatmap("tone", 440.0, 1, false).unwrap();
        // find the brightest pixel in the middle frame; the 440 Hz bank
        // sits in the lower fifth of a 0-8 kHz mel axis
        let col = hm.width / 2;
        let brightest = (0..hm.height)
            .max_by_key(|row| {
                let px = (row * hm.width + col) * 4;
                hm.pixels[px] as u32 + hm.pixels[px + 1] as u32
            })
            .unwrap();
        let bank = hm.height - 1 - brightest; // undo the vertical flip
        assert!((30..80).contains(&bank), "tone energy landed at bank {bank}");
    }

    #[test]
    fn response_curve_passes_band_and_rejects_stopband() {
        let rc = filter_response(100.0, 4000.0, 5, 256).unwrap();
        let at = |hz: f64| {
            let i = rc
                .freqs_hz
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - hz).abs().partial_cmp(&(b.1 - hz).abs()).unwrap())
                .unwrap()
                .0;
            (rc.single_db[i], rc.zero_phase_db[i])
        };
        let (mid_s, mid_z) = at(1000.0);
        assert!(mid_s > -1.0 && mid_z > -2.0, "band centre attenuated: {mid_s} {mid_z}");
        let (stop_s, stop_z) = at(20.0);
        assert!(stop_s < -20.0, "stop band leaks: {stop_s}");
        // the two-pass curve doubles the attenuation everywhere
        assert!((stop_z - 2.0 * stop_s).abs() < 1e-9);
    }

    #[test]
    fn corruption_is_live_and_measured() {
        let clean = corrupt_live("patient reports a dry cough and mild fever today", 0.0, 3);
        assert_eq!(clean.corrupted, "patient reports a dry cough and mild fever today");
        assert_eq!(clean.wer, 0.0);

        let text = "patient reports a dry cough and mild fever with chills since last night";
        let noisy = corrupt_live(text, 0.5, 3);
        assert!(noisy.wer > 0.0, "corruption at 0.5 left the text untouched");
        assert_eq!(noisy.wer, word_error_rate(text, &noisy.corrupted));
    }
}
