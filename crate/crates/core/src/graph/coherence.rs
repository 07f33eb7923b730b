//! Coherence connectivity between channels of a multichannel time series.
//!
//! Each channel is demeaned, band-passed to `f ± 5 Hz` with a zero-phase
//! windowed-sinc FIR, then convolved with a complex Morlet wavelet centred at
//! `f` to obtain `E(t) e^{jψ(t)}`. The edge weight between two channels is the
//! magnitude of their normalized complex inner product.

use std::f64::consts::PI;

use nalgebra::Complex;

use super::Adjacency;
use crate::error::{invalid, Result};
use crate::kernels::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceParams {
    /// Target frequency in Hz.
    pub frequency: f64,
    /// Sampling rate in Hz.
    pub sampling_rate: f64,
    /// Half-width of the band filter in Hz.
    pub band_half_width: f64,
    /// Morlet wavelet width in cycles.
    pub wavelet_cycles: f64,
}

impl CoherenceParams {
    pub fn new(frequency: f64, sampling_rate: f64) -> Self {
        Self { frequency, sampling_rate, band_half_width: 5.0, wavelet_cycles: 7.0 }
    }

    /// Shortest series accepted: four periods of the target frequency.
    pub fn min_samples(&self) -> usize {
        (4.0 * self.sampling_rate / self.frequency).ceil() as usize
    }
}

/// Coherence graph plus the channels that carried no energy.
#[derive(Debug, Clone)]
pub struct CoherenceGraph {
    pub adjacency: Adjacency,
    /// Constant channels; all their edges are zero.
    pub degenerate_channels: Vec<usize>,
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Symmetric band-pass taps, unit gain at `params.frequency`.
fn band_filter(params: &CoherenceParams, samples: usize) -> Vec<f64> {
    let fs = params.sampling_rate;
    let lo = (params.frequency - params.band_half_width).max(0.0);
    let hi = (params.frequency + params.band_half_width).min(0.5 * fs);
    let half = ((1.5 * fs / (hi - lo)).round() as usize).clamp(1, samples.saturating_sub(1) / 2).max(1);
    let len = 2 * half + 1;
    let mut taps: Vec<f64> = (0..len)
        .map(|n| {
            let m = n as f64 - half as f64;
            let ideal = 2.0 * hi / fs * sinc(2.0 * hi * m / fs) - 2.0 * lo / fs * sinc(2.0 * lo * m / fs);
            let hamming = 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos();
            ideal * hamming
        })
        .collect();
    let omega = 2.0 * PI * params.frequency / fs;
    let gain: f64 = taps.iter().enumerate().map(|(n, h)| h * (omega * (n as f64 - half as f64)).cos()).sum();
    if gain.abs() > f64::EPSILON {
        taps.iter_mut().for_each(|h| *h /= gain);
    }
    taps
}

fn morlet(params: &CoherenceParams) -> Vec<Complex<f64>> {
    let fs = params.sampling_rate;
    let sigma_t = params.wavelet_cycles / (2.0 * PI * params.frequency);
    let half = (3.0 * sigma_t * fs).ceil() as i64;
    (-half..=half)
        .map(|k| {
            let t = k as f64 / fs;
            let env = (-(t * t) / (2.0 * sigma_t * sigma_t)).exp();
            Complex::from_polar(env, 2.0 * PI * params.frequency * t)
        })
        .collect()
}

/// Centred ("same"-length) convolution with zero padding.
fn convolve_same<T>(signal: &[f64], kernel: &[T]) -> Vec<T>
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T> + Default,
{
    let half = (kernel.len() / 2) as i64;
    let n = signal.len() as i64;
    (0..n)
        .map(|t| {
            let mut acc = T::default();
            for (k, &h) in kernel.iter().enumerate() {
                let src = t + half - k as i64;
                if (0..n).contains(&src) {
                    acc = acc + h * signal[src as usize];
                }
            }
            acc
        })
        .collect()
}

/// Analytic signal `E(t) e^{jψ(t)}` of one channel at the target frequency.
pub(crate) fn analytic_signal(channel: &[f64], params: &CoherenceParams) -> Vec<Complex<f64>> {
    let mean = channel.iter().sum::<f64>() / channel.len() as f64;
    let centred: Vec<f64> = channel.iter().map(|x| x - mean).collect();
    let filtered = convolve_same(&centred, &band_filter(params, channel.len()));
    convolve_same(&filtered, &morlet(params))
}

/// Coherence adjacency over the rows of `series` (`p` channels × `T` samples).
pub fn coherence_adjacency(series: &Matrix, params: &CoherenceParams) -> Result<CoherenceGraph> {
    let (p, t) = series.shape();
    let (f, fs) = (params.frequency, params.sampling_rate);
    if !(f > 0.0 && f < 0.5 * fs) {
        return Err(invalid(format!("target frequency must satisfy 0 < f < fs/2, got f = {f}, fs = {fs}")));
    }
    if t < params.min_samples() {
        return Err(invalid(format!("series too short: {t} samples, need at least {}", params.min_samples())));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(invalid("series contains non-finite samples"));
    }

    let edge = {
        let filt = band_filter(params, t).len() / 2;
        let wav = morlet(params).len() / 2;
        filt.max(wav).min(t / 4)
    };
    let mut degenerate = Vec::new();
    let analytic: Vec<Option<Vec<Complex<f64>>>> = (0..p)
        .map(|i| {
            let row: Vec<f64> = series.row(i).iter().copied().collect();
            let constant = row.iter().all(|&v| v == row[0]);
            let c = analytic_signal(&row, params);
            let trimmed = c[edge..t - edge].to_vec();
            let energy: f64 = trimmed.iter().map(|z| z.norm_sqr()).sum();
            if constant || energy <= 0.0 {
                degenerate.push(i);
                None
            } else {
                Some(trimmed)
            }
        })
        .collect();

    let mut w = Matrix::zeros(p, p);
    for a in 0..p {
        for b in (a + 1)..p {
            if let (Some(ca), Some(cb)) = (&analytic[a], &analytic[b]) {
                let cross: Complex<f64> = ca.iter().zip(cb).map(|(x, y)| x * y.conj()).sum();
                let ea: f64 = ca.iter().map(|z| z.norm_sqr()).sum();
                let eb: f64 = cb.iter().map(|z| z.norm_sqr()).sum();
                let v = (cross.norm() / (ea.sqrt() * eb.sqrt())).min(1.0);
                w[(a, b)] = v;
                w[(b, a)] = v;
            }
        }
    }
    if !degenerate.is_empty() {
        log::warn!("coherence: channels {degenerate:?} carry no energy; their edges are zero");
    }
    Ok(CoherenceGraph { adjacency: Adjacency::new(w)?, degenerate_channels: degenerate })
}
