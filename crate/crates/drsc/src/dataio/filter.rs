//! IIR filter design and zero-phase (forward–backward) filtering.
//!
//! The designs are Butterworth low-pass/band-pass via the bilinear transform.
//! [`zero_phase_filter`] matches the conventional forward–backward procedure:
//! odd extension at both ends, steady-state initial conditions, filter,
//! reverse, filter, reverse, trim. The cascade has exactly zero phase and a
//! squared magnitude response.

use num_complex::Complex64;

use crate::error::{Error, Result};

use super::audio::AudioClip;

/// Digital IIR filter as transfer-function coefficients, `a[0] == 1`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FilterSpec {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
}

impl FilterSpec {
    pub fn new(b: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::Filter("empty coefficient vector".into()));
        }
        if a[0] == 0.0 {
            return Err(Error::Filter("a[0] must be nonzero".into()));
        }
        let inv = 1.0 / a[0];
        Ok(Self {
            b: b.iter().map(|v| v * inv).collect(),
            a: a.iter().map(|v| v * inv).collect(),
        })
    }

    /// The default speech-cleaning filter: 4-pole Butterworth band-pass,
    /// 60–7600 Hz at 16 kHz.
    pub fn speech_band_default() -> Self {
        butter_bandpass(2, 60.0, 7600.0, 16_000).expect("default filter design")
    }

    /// Schur–Cohn test: true iff every pole lies strictly inside the unit
    /// circle.
    pub fn is_stable(&self) -> bool {
        let mut c = self.a.clone();
        while c.len() > 1 {
            let n = c.len() - 1;
            let k = c[n] / c[0];
            if !(k.abs() < 1.0) || !k.is_finite() {
                return false;
            }
            let denom = 1.0 - k * k;
            let next: Vec<f64> = (0..n).map(|i| (c[i] - k * c[n - i]) / denom).collect();
            c = next;
        }
        true
    }

    fn order(&self) -> usize {
        self.a.len().max(self.b.len())
    }
}

// --- Butterworth design -----------------------------------------------------

fn butter_prototype_poles(order: usize) -> Vec<Complex64> {
    (1..=order)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k + order - 1) as f64 / (2 * order) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        coeffs = next;
    }
    coeffs
}

fn real_coeffs(poly: &[Complex64]) -> Vec<f64> {
    poly.iter()
        .map(|c| {
            debug_assert!(c.im.abs() < 1e-8, "non-conjugate roots: imag {}", c.im);
            c.re
        })
        .collect()
}

/// Bilinear transform of a zero/pole/gain system at the conventional internal
/// rate fs = 2 (matched to pre-warping below).
fn bilinear_zpk(
    zeros: &[Complex64],
    poles: &[Complex64],
    gain: f64,
) -> (Vec<Complex64>, Vec<Complex64>, f64) {
    let fs2 = Complex64::new(4.0, 0.0); // 2 * fs with fs = 2
    let zd: Vec<Complex64> = zeros.iter().map(|z| (fs2 + z) / (fs2 - z)).collect();
    let mut pd: Vec<Complex64> = poles.iter().map(|p| (fs2 + p) / (fs2 - p)).collect();
    let mut zd_full = zd;
    // degree deficit maps to zeros at Nyquist
    while zd_full.len() < pd.len() {
        zd_full.push(Complex64::new(-1.0, 0.0));
    }
    let num: Complex64 = zeros.iter().fold(Complex64::new(1.0, 0.0), |acc, z| acc * (fs2 - z));
    let den: Complex64 = poles.iter().fold(Complex64::new(1.0, 0.0), |acc, p| acc * (fs2 - p));
    let kd = gain * (num / den).re;
    pd.shrink_to_fit();
    (zd_full, pd, kd)
}

fn zpk_to_spec(zeros: &[Complex64], poles: &[Complex64], gain: f64) -> Result<FilterSpec> {
    let b: Vec<f64> = real_coeffs(&poly_from_roots(zeros)).iter().map(|c| c * gain).collect();
    let a = real_coeffs(&poly_from_roots(poles));
    FilterSpec::new(b, a)
}

fn prewarp(normalized: f64) -> f64 {
    // internal fs = 2: warped analog frequency 2·fs·tan(π f / (2·fs))
    4.0 * (std::f64::consts::PI * normalized / 2.0).tan()
}

fn check_freq(hz: f64, sample_rate: u32, what: &str) -> Result<f64> {
    let nyq = sample_rate as f64 / 2.0;
    if !(hz > 0.0 && hz < nyq) {
        return Err(Error::Filter(format!(
            "{what} frequency {hz} Hz outside (0, {nyq}) for sample rate {sample_rate}"
        )));
    }
    Ok(hz / nyq)
}

/// Butterworth low-pass with `order` poles.
pub fn butter_lowpass(order: usize, cutoff_hz: f64, sample_rate: u32) -> Result<FilterSpec> {
    if order == 0 {
        return Err(Error::Filter("filter order must be positive".into()));
    }
    let wn = check_freq(cutoff_hz, sample_rate, "cutoff")?;
    let warped = prewarp(wn);
    let poles: Vec<Complex64> = butter_prototype_poles(order).iter().map(|p| p * warped).collect();
    let gain = warped.powi(order as i32);
    let (zd, pd, kd) = bilinear_zpk(&[], &poles, gain);
    let spec = zpk_to_spec(&zd, &pd, kd)?;
    debug_assert!(spec.is_stable());
    Ok(spec)
}

/// Butterworth band-pass: `order` prototype poles become `2·order` poles.
pub fn butter_bandpass(order: usize, low_hz: f64, high_hz: f64, sample_rate: u32) -> Result<FilterSpec> {
    if order == 0 {
        return Err(Error::Filter("filter order must be positive".into()));
    }
    if low_hz >= high_hz {
        return Err(Error::Filter(format!("band edges out of order: {low_hz} ≥ {high_hz}")));
    }
    let w1 = prewarp(check_freq(low_hz, sample_rate, "low edge")?);
    let w2 = prewarp(check_freq(high_hz, sample_rate, "high edge")?);
    let bw = w2 - w1;
    let wo2 = w1 * w2;

    let mut poles = Vec::with_capacity(2 * order);
    for p in butter_prototype_poles(order) {
        let half = p * (bw / 2.0);
        let disc = (half * half - wo2).sqrt();
        poles.push(half + disc);
        poles.push(half - disc);
    }
    // prototype zeros (none) map to `order` zeros at s = 0
    let zeros = vec![Complex64::new(0.0, 0.0); order];
    let gain = bw.powi(order as i32);
    let (zd, pd, kd) = bilinear_zpk(&zeros, &poles, gain);
    let spec = zpk_to_spec(&zd, &pd, kd)?;
    debug_assert!(spec.is_stable());
    Ok(spec)
}

// --- running the filter -------------------------------------------------------

/// Direct-form II transposed filter. Returns the output and the final state.
/// `zi`, when given, must have length max(len(a), len(b)) − 1.
pub fn lfilter(spec: &FilterSpec, x: &[f64], zi: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
    let n = spec.order();
    let mut b = spec.b.clone();
    let mut a = spec.a.clone();
    b.resize(n, 0.0);
    a.resize(n, 0.0);
    let mut z = match zi {
        Some(z) => {
            assert_eq!(z.len(), n - 1, "initial state length");
            z.to_vec()
        }
        None => vec![0.0; n - 1],
    };
    let mut y = Vec::with_capacity(x.len());
    for &xv in x {
        let yv = b[0] * xv + if n > 1 { z[0] } else { 0.0 };
        for i in 0..n.saturating_sub(2) {
            z[i] = b[i + 1] * xv + z[i + 1] - a[i + 1] * yv;
        }
        if n > 1 {
            z[n - 2] = b[n - 1] * xv - a[n - 1] * yv;
        }
        y.push(yv);
    }
    (y, z)
}

/// Steady-state initial filter state for a unit step input, so filtering a
/// constant produces that constant from the first sample.
pub fn lfilter_zi(spec: &FilterSpec) -> Vec<f64> {
    let n = spec.order();
    if n < 2 {
        return Vec::new();
    }
    let mut b = spec.b.clone();
    let mut a = spec.a.clone();
    b.resize(n, 0.0);
    a.resize(n, 0.0);
    let m = n - 1;
    // Solve (I − Cᵀ) zi = B with C the companion matrix of a and
    // B[i] = b[i+1] − a[i+1]·b[0].
    let mut mat = vec![0.0; m * m];
    for i in 0..m {
        mat[i * m + i] = 1.0;
        mat[i * m] += a[i + 1];
        if i + 1 < m {
            mat[i * m + i + 1] -= 1.0;
        }
    }
    let rhs: Vec<f64> = (0..m).map(|i| b[i + 1] - a[i + 1] * b[0]).collect();
    solve_dense(mat, rhs, m)
}

/// Gaussian elimination with partial pivoting for the small zi system.
fn solve_dense(mut mat: Vec<f64>, mut rhs: Vec<f64>, m: usize) -> Vec<f64> {
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&i, &j| mat[i * m + col].abs().partial_cmp(&mat[j * m + col].abs()).unwrap())
            .unwrap();
        if pivot != col {
            for k in 0..m {
                mat.swap(col * m + k, pivot * m + k);
            }
            rhs.swap(col, pivot);
        }
        let d = mat[col * m + col];
        assert!(d.abs() > 1e-300, "singular steady-state system");
        for row in col + 1..m {
            let f = mat[row * m + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..m {
                mat[row * m + k] -= f * mat[col * m + k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; m];
    for col in (0..m).rev() {
        let mut acc = rhs[col];
        for k in col + 1..m {
            acc -= mat[col * m + k] * x[k];
        }
        x[col] = acc / mat[col * m + col];
    }
    x
}

fn odd_ext(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    for i in 0..pad {
        out.push(2.0 * x[0] - x[pad - i]);
    }
    out.extend_from_slice(x);
    for i in 0..pad {
        out.push(2.0 * x[n - 1] - x[n - 2 - i]);
    }
    out
}

/// Forward–backward filtering on raw samples. Errors if the filter is
/// unstable or the signal is too short for the edge extension.
pub fn zero_phase_filter_samples(x: &[f64], spec: &FilterSpec) -> Result<Vec<f64>> {
    if !spec.is_stable() {
        return Err(Error::Filter(
            "unstable filter: poles outside the unit circle; check design parameters".into(),
        ));
    }
    let pad = 3 * spec.order();
    if x.len() <= pad {
        return Err(Error::Filter(format!(
            "signal of {} samples too short for edge extension of {pad}",
            x.len()
        )));
    }
    let zi = lfilter_zi(spec);
    let ext = odd_ext(x, pad);

    let scaled: Vec<f64> = zi.iter().map(|v| v * ext[0]).collect();
    let (mut y, _) = lfilter(spec, &ext, Some(&scaled));
    y.reverse();
    let scaled: Vec<f64> = zi.iter().map(|v| v * y[0]).collect();
    let (mut y, _) = lfilter(spec, &y, Some(&scaled));
    y.reverse();
    Ok(y[pad..y.len() - pad].to_vec())
}

/// Zero-phase filter an [`AudioClip`] (same length out, identical rate).
pub fn zero_phase_filter(clip: &AudioClip, spec: &FilterSpec) -> Result<AudioClip> {
    Ok(AudioClip::new(
        zero_phase_filter_samples(&clip.samples, spec)?,
        clip.sample_rate,
    ))
}
