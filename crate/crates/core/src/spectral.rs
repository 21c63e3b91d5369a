//! Welch power spectral densities and the averaged-normalised PSD (ANPSD)
//! used for output-only screening of multichannel records.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::AcquisitionRecord;

/// 2^13 samples: about 7.7 s and 0.13 Hz resolution at 1066 Hz.
pub const DEFAULT_SEGMENT_LENGTH: usize = 8192;
pub const DEFAULT_OVERLAP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
}

impl Window {
    /// Periodic window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WelchParams {
    pub segment_length: usize,
    pub overlap: f64,
}

impl Default for WelchParams {
    fn default() -> Self {
        Self { segment_length: DEFAULT_SEGMENT_LENGTH, overlap: DEFAULT_OVERLAP }
    }
}

/// One-sided PSD per channel, (m/s²)²/Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    pub frequencies: Vec<f64>,
    /// channels x frequencies
    pub values: DMatrix<f64>,
    pub channel_ids: Vec<String>,
    pub segment_length: usize,
    pub overlap: f64,
    pub window: Window,
    pub segments: usize,
}

impl PsdEstimate {
    pub fn resolution(&self) -> f64 {
        self.frequencies.get(1).copied().unwrap_or(0.0) - self.frequencies[0]
    }

    pub fn channel(&self, index: usize) -> Vec<f64> {
        self.values.row(index).iter().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Normalisation {
    /// Divide each channel by its discrete integral (unit-area density).
    #[default]
    Integral,
    /// Divide each channel by its maximum.
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnpsdEstimate {
    pub frequencies: Vec<f64>,
    pub values: Vec<f64>,
    pub normalisation: Normalisation,
}

impl AnpsdEstimate {
    /// Wraps an externally computed density; checks the grid and sign invariants.
    pub fn new(frequencies: Vec<f64>, values: Vec<f64>, normalisation: Normalisation) -> Result<Self> {
        if frequencies.len() != values.len() || frequencies.is_empty() {
            return Err(Error::Spectral("grid and values differ in length".into()));
        }
        if frequencies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Spectral("frequency grid is not strictly increasing".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Spectral("density values must be finite and non-negative".into()));
        }
        Ok(Self { frequencies, values, normalisation })
    }

    pub fn integral(&self) -> f64 {
        discrete_integral(&self.frequencies, &self.values)
    }
}

/// Rectangle-rule integral on a uniform grid: sum(values) * spacing.
pub fn discrete_integral(frequencies: &[f64], values: &[f64]) -> f64 {
    if frequencies.len() < 2 {
        return values.iter().sum();
    }
    let df = frequencies[1] - frequencies[0];
    values.iter().sum::<f64>() * df
}

pub fn welch_psd(record: &AcquisitionRecord, segment_length: usize, overlap: f64) -> Result<PsdEstimate> {
    let n = record.len();
    if segment_length < 2 {
        return Err(Error::Spectral("segment length must be at least 2 samples".into()));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::Spectral(format!("overlap {overlap} outside [0, 1)")));
    }
    if segment_length > n {
        return Err(Error::Spectral(format!("segment length {segment_length} exceeds record length {n}")));
    }
    let hop = segment_length - (segment_length as f64 * overlap).floor() as usize;
    let segments = (n - segment_length) / hop + 1;
    if segments < 2 {
        return Err(Error::Spectral(format!("only {segments} segment fits; use a shorter segment length")));
    }

    let fs = record.sample_rate();
    let window = Window::Hann.coefficients(segment_length);
    let window_energy: f64 = window.iter().map(|w| w * w).sum();
    let bins = segment_length / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(segment_length);

    let rows: Vec<Vec<f64>> = (0..record.channel_count())
        .into_par_iter()
        .map(|ch| {
            let x = record.samples().row(ch);
            let mut acc = vec![0.0; bins];
            let mut buf = vec![Complex64::new(0.0, 0.0); segment_length];
            for s in 0..segments {
                let start = s * hop;
                let mean = (start..start + segment_length).map(|i| x[i]).sum::<f64>() / segment_length as f64;
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = Complex64::new((x[start + i] - mean) * window[i], 0.0);
                }
                fft.process(&mut buf);
                for (a, b) in acc.iter_mut().zip(&buf) {
                    *a += b.norm_sqr();
                }
            }
            let scale = 1.0 / (fs * window_energy * segments as f64);
            acc.iter()
                .enumerate()
                .map(|(k, &p)| {
                    let one_sided =
                        if k == 0 || (segment_length.is_multiple_of(2) && k == bins - 1) { 1.0 } else { 2.0 };
                    p * scale * one_sided
                })
                .collect()
        })
        .collect();

    let mut values = DMatrix::zeros(record.channel_count(), bins);
    for (ch, row) in rows.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            values[(ch, k)] = *v;
        }
    }
    Ok(PsdEstimate {
        frequencies: (0..bins).map(|k| k as f64 * fs / segment_length as f64).collect(),
        values,
        channel_ids: record.sensors().iter().map(|s| s.id.clone()).collect(),
        segment_length,
        overlap,
        window: Window::Hann,
        segments,
    })
}

/// Normalises each channel's PSD then averages across channels.
pub fn anpsd(psd: &PsdEstimate) -> Result<AnpsdEstimate> {
    anpsd_with(psd, Normalisation::Integral)
}

pub fn anpsd_with(psd: &PsdEstimate, normalisation: Normalisation) -> Result<AnpsdEstimate> {
    let channels = psd.values.nrows();
    if channels == 0 {
        return Err(Error::Spectral("ANPSD needs at least one channel".into()));
    }
    let bins = psd.frequencies.len();
    let mut avg = vec![0.0; bins];
    for ch in 0..channels {
        let row = psd.channel(ch);
        let norm = match normalisation {
            Normalisation::Integral => discrete_integral(&psd.frequencies, &row),
            Normalisation::Max => row.iter().copied().fold(0.0, f64::max),
        };
        if !(norm > 0.0) {
            let id = psd.channel_ids.get(ch).cloned().unwrap_or_else(|| ch.to_string());
            return Err(Error::Spectral(format!("channel {id} has an identically zero PSD; normalisation undefined")));
        }
        for (a, v) in avg.iter_mut().zip(&row) {
            *a += v / norm;
        }
    }
    for a in &mut avg {
        *a /= channels as f64;
    }
    AnpsdEstimate::new(psd.frequencies.clone(), avg, normalisation)
}

/// Local maxima inside `band` whose topographic prominence exceeds
/// `min_prominence` times the largest in-band value, sorted by frequency.
///
/// Flat tops count once (at their centre). Points on the band edges are never
/// peaks. Two resonances closer than the grid spacing merge into one peak.
pub fn peak_screen(anpsd: &AnpsdEstimate, band: [f64; 2], min_prominence: f64) -> Result<Vec<f64>> {
    let [lo, hi] = band;
    if !(lo < hi) {
        return Err(Error::Spectral(format!("empty band [{lo}, {hi}]")));
    }
    let idx: Vec<usize> =
        (0..anpsd.frequencies.len()).filter(|&i| anpsd.frequencies[i] >= lo && anpsd.frequencies[i] <= hi).collect();
    if idx.is_empty() {
        return Err(Error::Spectral(format!("band [{lo}, {hi}] contains no grid points")));
    }
    let (first, last) = (idx[0], idx[idx.len() - 1]);
    let v = &anpsd.values[first..=last];
    let f = &anpsd.frequencies[first..=last];
    let threshold = min_prominence * v.iter().copied().fold(0.0, f64::max);

    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < v.len() {
        if v[i] > v[i - 1] {
            // extend over a plateau
            let mut j = i;
            while j + 1 < v.len() && v[j + 1] == v[i] {
                j += 1;
            }
            if j + 1 < v.len() && v[j + 1] < v[i] {
                let centre = (i + j) / 2;
                if prominence(v, i, j) > threshold {
                    peaks.push(f[centre]);
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    Ok(peaks)
}

fn prominence(v: &[f64], start: usize, end: usize) -> f64 {
    let h = v[start];
    let mut left_min = h;
    for k in (0..start).rev() {
        if v[k] > h {
            break;
        }
        left_min = left_min.min(v[k]);
    }
    let mut right_min = h;
    for &x in &v[end + 1..] {
        if x > h {
            break;
        }
        right_min = right_min.min(x);
    }
    h - left_min.max(right_min)
}
