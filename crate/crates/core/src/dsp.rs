//! Filtering and spectral primitives.
//!
//! Band decomposition uses linear-phase windowed-sinc FIR kernels (Hamming
//! window) applied with zero phase: the kernel is symmetric, the signal is
//! reflect-padded by half the kernel length on both sides, and the output is
//! read back centred, so there is no group delay.
//!
//! The STFT is rectangular-windowed and reports one-sided magnitude spectra.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default sample rate of RSS traces.
pub const SAMPLE_RATE_HZ: f64 = 500.0;
/// Default FIR length; long enough to resolve a 0.5 Hz band edge at 500 Hz.
pub const DEFAULT_TAPS: usize = 1001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterKind {
    LowPass,
    BandPass,
    HighPass,
}

/// An immutable, symmetric FIR kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterKernel {
    taps: Vec<f64>,
    kind: FilterKind,
    cutoffs_hz: Vec<f64>,
    fs_hz: f64,
}

impl FilterKernel {
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn cutoffs_hz(&self) -> &[f64] {
        &self.cutoffs_hz
    }

    pub fn fs_hz(&self) -> f64 {
        self.fs_hz
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Magnitude of the zero-phase transfer function at `freq_hz`.
    pub fn gain_at(&self, freq_hz: f64) -> f64 {
        let centre = (self.taps.len() / 2) as f64;
        let w = 2.0 * PI * freq_hz / self.fs_hz;
        // Symmetric taps make the centred response purely real.
        self.taps
            .iter()
            .enumerate()
            .map(|(n, h)| h * (w * (n as f64 - centre)).cos())
            .sum::<f64>()
            .abs()
    }

    pub fn gain_db_at(&self, freq_hz: f64) -> f64 {
        20.0 * self.gain_at(freq_hz).max(1e-300).log10()
    }
}

fn hamming(n: usize, len: usize) -> f64 {
    0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos()
}

/// Unit-DC-gain windowed-sinc low-pass taps.
fn lowpass_taps(cutoff_hz: f64, tap_count: usize, fs_hz: f64) -> Vec<f64> {
    let fc = cutoff_hz / fs_hz;
    let centre = (tap_count / 2) as f64;
    let mut taps: Vec<f64> = (0..tap_count)
        .map(|n| {
            let x = n as f64 - centre;
            let sinc = if x == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * x).sin() / (PI * x)
            };
            sinc * hamming(n, tap_count)
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    symmetrize(&mut taps);
    taps
}

// Forces exact bitwise symmetry; the trig evaluation above can differ in the
// last ulp between mirrored indices.
fn symmetrize(taps: &mut [f64]) {
    let n = taps.len();
    for i in 0..n / 2 {
        let v = 0.5 * (taps[i] + taps[n - 1 - i]);
        taps[i] = v;
        taps[n - 1 - i] = v;
    }
}

/// Designs a linear-phase FIR kernel.
///
/// `cutoffs_hz` holds one frequency for low/high-pass and `[low, high]` for
/// band-pass. High-pass and band-pass kernels are built by spectral
/// inversion/subtraction of unit-gain low-pass kernels, so their DC gain is
/// zero to rounding.
pub fn design_fir(kind: FilterKind, cutoffs_hz: &[f64], tap_count: usize, fs_hz: f64) -> Result<FilterKernel> {
    if tap_count < 3 || tap_count % 2 == 0 {
        return Err(Error::config(format!(
            "tap count must be odd and >= 3, got {tap_count}"
        )));
    }
    if !(fs_hz.is_finite() && fs_hz > 0.0) {
        return Err(Error::config(format!("invalid sample rate {fs_hz}")));
    }
    let expected = match kind {
        FilterKind::BandPass => 2,
        _ => 1,
    };
    if cutoffs_hz.len() != expected {
        return Err(Error::config(format!(
            "{kind:?} needs {expected} cutoff(s), got {}",
            cutoffs_hz.len()
        )));
    }
    let nyquist = fs_hz / 2.0;
    for &c in cutoffs_hz {
        if !(c.is_finite() && c > 0.0 && c < nyquist) {
            return Err(Error::config(format!(
                "cutoff {c} Hz must lie strictly inside (0, {nyquist}) Hz"
            )));
        }
    }
    let taps = match kind {
        FilterKind::LowPass => lowpass_taps(cutoffs_hz[0], tap_count, fs_hz),
        FilterKind::HighPass => {
            let mut taps = lowpass_taps(cutoffs_hz[0], tap_count, fs_hz);
            taps.iter_mut().for_each(|t| *t = -*t);
            taps[tap_count / 2] += 1.0;
            taps
        }
        FilterKind::BandPass => {
            let (lo, hi) = (cutoffs_hz[0], cutoffs_hz[1]);
            if lo >= hi {
                return Err(Error::config(format!(
                    "band-pass edges must satisfy low < high, got {lo} >= {hi}"
                )));
            }
            let low = lowpass_taps(lo, tap_count, fs_hz);
            lowpass_taps(hi, tap_count, fs_hz)
                .into_iter()
                .zip(low)
                .map(|(h, l)| h - l)
                .collect()
        }
    };
    Ok(FilterKernel {
        taps,
        kind,
        cutoffs_hz: cutoffs_hz.to_vec(),
        fs_hz,
    })
}

/// Maps a possibly out-of-range index onto `0..n` by mirror reflection
/// about the end samples (the end sample itself is not repeated).
fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Zero-phase filtering: same-length output, reflect-padded edges.
pub fn filter_zero_phase(signal: &[f64], kernel: &FilterKernel) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(Error::Empty("signal"));
    }
    let n = signal.len();
    let half = kernel.taps.len() / 2;
    let padded: Vec<f64> = (-(half as isize)..(n + half) as isize)
        .map(|i| signal[reflect_index(i, n)])
        .collect();
    Ok((0..n)
        .map(|i| dot(&padded[i..i + kernel.taps.len()], &kernel.taps))
        .collect())
}

/// Forward real-to-complex FFT (full length, unnormalized).
pub fn fft_forward(signal: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    if !buf.is_empty() {
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    }
    buf
}

/// Inverse FFT normalized by `1/N`, so `fft_inverse(fft_forward(x)) == x`.
pub fn fft_inverse(spectrum: &[Complex64]) -> Vec<Complex64> {
    let mut buf = spectrum.to_vec();
    if !buf.is_empty() {
        FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
        let scale = 1.0 / buf.len() as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
    }
    buf
}

/// Window count × bin count matrix of one-sided STFT magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    magnitudes: Vec<f64>,
    window_count: usize,
    bin_count: usize,
    pub bin_hz: f64,
    pub window_s: f64,
    pub hop_s: f64,
}

impl Spectrogram {
    pub fn window_count(&self) -> usize {
        self.window_count
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    pub fn window(&self, i: usize) -> &[f64] {
        &self.magnitudes[i * self.bin_count..(i + 1) * self.bin_count]
    }

    pub fn get(&self, window: usize, bin: usize) -> f64 {
        self.magnitudes[window * self.bin_count + bin]
    }
}

/// Segment length the canonical STFT accepts: 5 s at 500 Hz.
pub const SEGMENT_LEN: usize = 2500;
/// 2 s analysis window; also the FFT size.
pub const STFT_WINDOW: usize = 1000;
/// 1 s hop.
pub const STFT_HOP: usize = 500;

/// Rectangular-window STFT with a reusable FFT plan.
pub struct StftPlan {
    fft: Arc<dyn Fft<f64>>,
    window: usize,
    hop: usize,
    fs_hz: f64,
}

impl StftPlan {
    pub fn new(window: usize, hop: usize, fs_hz: f64) -> Result<Self> {
        if window < 2 || hop == 0 || !(fs_hz > 0.0) {
            return Err(Error::config("STFT needs window >= 2, hop >= 1, fs > 0"));
        }
        Ok(Self {
            fft: FftPlanner::new().plan_fft_forward(window),
            window,
            hop,
            fs_hz,
        })
    }

    /// The 1000-point / 500-hop plan at 500 Hz.
    pub fn canonical() -> Self {
        Self::new(STFT_WINDOW, STFT_HOP, SAMPLE_RATE_HZ).expect("canonical STFT geometry")
    }

    pub fn run(&self, signal: &[f64]) -> Result<Spectrogram> {
        if signal.len() < self.window {
            return Err(Error::TooShort {
                got: signal.len(),
                need: self.window,
            });
        }
        let window_count = (signal.len() - self.window) / self.hop + 1;
        let bin_count = self.window / 2 + 1;
        let mut magnitudes = Vec::with_capacity(window_count * bin_count);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.window];
        for w in 0..window_count {
            let start = w * self.hop;
            for (b, &x) in buf.iter_mut().zip(&signal[start..start + self.window]) {
                *b = Complex64::new(x, 0.0);
            }
            self.fft.process(&mut buf);
            magnitudes.extend(buf[..bin_count].iter().map(|c| c.norm()));
        }
        Ok(Spectrogram {
            magnitudes,
            window_count,
            bin_count,
            bin_hz: self.fs_hz / self.window as f64,
            window_s: self.window as f64 / self.fs_hz,
            hop_s: self.hop as f64 / self.fs_hz,
        })
    }
}

/// STFT of one canonical 2500-sample segment: 4 windows × 501 bins.
pub fn stft(segment: &[f64]) -> Result<Spectrogram> {
    if segment.len() != SEGMENT_LEN {
        return Err(Error::Shape(format!(
            "STFT segment must have {SEGMENT_LEN} samples, got {}",
            segment.len()
        )));
    }
    StftPlan::canonical().run(segment)
}
