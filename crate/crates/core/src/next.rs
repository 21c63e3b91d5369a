//! Natural Excitation Technique: output cross-correlations against a reference
//! channel, and their one-sided Fourier transforms ("half-spectra").
//!
//! Under broadband excitation the positive-lag correlations decay like free
//! responses of the structure, so their half-spectra carry the structural
//! poles and can be fed to a frequency-domain realization.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::AcquisitionRecord;

pub const DEFAULT_MAX_LAG_S: f64 = 10.0;
/// Half-spectrum grid spacing is `1 / (oversample * max_lag)`.
pub const MIN_OVERSAMPLE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSet {
    pub reference_channel: String,
    pub channel_ids: Vec<String>,
    pub sample_rate: f64,
    /// Lag grid in seconds, `0, 1/fs, ..., max_lag`.
    pub lags: Vec<f64>,
    /// channels x lags
    pub values: DMatrix<f64>,
}

impl CorrelationSet {
    pub fn max_lag(&self) -> f64 {
        self.lags.last().copied().unwrap_or(0.0)
    }

    pub fn trace(&self, channel: usize) -> Vec<f64> {
        self.values.row(channel).iter().copied().collect()
    }
}

/// Unbiased positive-lag cross-correlations `R_c,ref(tau)` for every channel.
///
/// Channel means are removed first, so the reference auto-correlation at zero
/// lag is the reference variance.
pub fn next_correlations(record: &AcquisitionRecord, reference: &str, max_lag: f64) -> Result<CorrelationSet> {
    let ref_idx = record
        .channel_index(reference)
        .ok_or_else(|| Error::Correlation(format!("unknown reference sensor {reference:?}")))?;
    let fs = record.sample_rate();
    let n = record.len();
    if !(max_lag.is_finite() && max_lag > 0.0) {
        return Err(Error::Correlation(format!("max lag must be positive, got {max_lag}")));
    }
    let duration = record.duration();
    if max_lag > duration / 4.0 + 0.5 / fs {
        return Err(Error::Correlation(format!("max lag {max_lag} s exceeds a quarter of the {duration} s record")));
    }
    let lags = (max_lag * fs).round() as usize;
    if lags == 0 || lags >= n {
        return Err(Error::Correlation("record too short for the requested lag".into()));
    }

    let nfft = (n + lags + 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(nfft);
    let inverse = planner.plan_fft_inverse(nfft);

    let spectrum = |ch: usize| {
        let row = record.samples().row(ch);
        let mean = row.iter().sum::<f64>() / n as f64;
        let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
        for (b, x) in buf.iter_mut().zip(row.iter()) {
            b.re = x - mean;
        }
        forward.process(&mut buf);
        buf
    };
    let reference_spectrum = spectrum(ref_idx);

    let traces: Vec<Vec<f64>> = (0..record.channel_count())
        .into_par_iter()
        .map(|ch| {
            let mut buf = spectrum(ch);
            for (b, r) in buf.iter_mut().zip(&reference_spectrum) {
                *b *= r.conj();
            }
            inverse.process(&mut buf);
            (0..=lags).map(|k| buf[k].re / (nfft as f64 * (n - k) as f64)).collect()
        })
        .collect();

    let mut values = DMatrix::zeros(record.channel_count(), lags + 1);
    for (ch, t) in traces.iter().enumerate() {
        for (k, v) in t.iter().enumerate() {
            values[(ch, k)] = *v;
        }
    }
    Ok(CorrelationSet {
        reference_channel: reference.to_string(),
        channel_ids: record.sensors().iter().map(|s| s.id.clone()).collect(),
        sample_rate: fs,
        lags: (0..=lags).map(|k| k as f64 / fs).collect(),
        values,
    })
}

/// Lag window applied before the transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Taper {
    #[default]
    Rectangular,
    /// `w(tau) = exp(-decay * tau)`, decay in 1/s. Shifts every pole left by
    /// `decay`, which must be undone on the identified poles.
    Exponential { decay: f64 },
}

impl Taper {
    pub fn weight(self, tau: f64) -> f64 {
        match self {
            Taper::Rectangular => 1.0,
            Taper::Exponential { decay } => (-decay * tau).exp(),
        }
    }

    /// Real-part shift (rad/s) the taper imposes on every pole.
    pub fn pole_shift(self) -> f64 {
        match self {
            Taper::Rectangular => 0.0,
            Taper::Exponential { decay } => decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpectrumSet {
    pub frequencies: Vec<f64>,
    /// channels x frequencies
    pub values: DMatrix<Complex64>,
    pub channel_ids: Vec<String>,
    pub reference_channel: String,
    pub taper: Taper,
    pub sample_rate: f64,
    pub max_lag: f64,
}

impl HalfSpectrumSet {
    pub fn channel_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn spacing(&self) -> f64 {
        self.frequencies.get(1).copied().unwrap_or(0.0) - self.frequencies[0]
    }

    /// Keeps every `stride`-th frequency, starting at the first.
    pub fn decimate(&self, stride: usize) -> HalfSpectrumSet {
        let stride = stride.max(1);
        let keep: Vec<usize> = (0..self.frequencies.len()).step_by(stride).collect();
        HalfSpectrumSet {
            frequencies: keep.iter().map(|&k| self.frequencies[k]).collect(),
            values: self.values.select_columns(keep.iter()),
            channel_ids: self.channel_ids.clone(),
            reference_channel: self.reference_channel.clone(),
            taper: self.taper,
            sample_rate: self.sample_rate,
            max_lag: self.max_lag,
        }
    }
}

pub fn half_spectra(corrs: &CorrelationSet, taper: Taper) -> Result<HalfSpectrumSet> {
    half_spectra_with(corrs, taper, MIN_OVERSAMPLE)
}

/// DFT of the tapered positive-lag traces, zero-padded to `oversample` times
/// the trace length and scaled by `1/fs` so values approximate the continuous
/// transform.
pub fn half_spectra_with(corrs: &CorrelationSet, taper: Taper, oversample: usize) -> Result<HalfSpectrumSet> {
    if corrs.values.nrows() == 0 || corrs.lags.len() < 2 {
        return Err(Error::Correlation("empty correlation set".into()));
    }
    if oversample < MIN_OVERSAMPLE {
        return Err(Error::InvalidConfig(format!(
            "half-spectrum oversampling must be at least {MIN_OVERSAMPLE}, got {oversample}"
        )));
    }
    if let Taper::Exponential { decay } = taper {
        if !(decay.is_finite() && decay >= 0.0) {
            return Err(Error::InvalidConfig(format!("taper decay must be non-negative, got {decay}")));
        }
    }
    let fs = corrs.sample_rate;
    let lags = corrs.lags.len() - 1;
    let nfft = oversample * lags;
    let bins = nfft / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nfft);
    let weights: Vec<f64> = corrs.lags.iter().map(|&t| taper.weight(t)).collect();

    let rows: Vec<Vec<Complex64>> = (0..corrs.values.nrows())
        .into_par_iter()
        .map(|ch| {
            let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
            for (k, w) in weights.iter().enumerate() {
                buf[k].re = corrs.values[(ch, k)] * w;
            }
            fft.process(&mut buf);
            buf.truncate(bins);
            buf.iter().map(|c| c / fs).collect()
        })
        .collect();

    let mut values = DMatrix::from_element(corrs.values.nrows(), bins, Complex64::new(0.0, 0.0));
    for (ch, row) in rows.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            values[(ch, k)] = *v;
        }
    }
    Ok(HalfSpectrumSet {
        frequencies: (0..bins).map(|k| k as f64 * fs / nfft as f64).collect(),
        values,
        channel_ids: corrs.channel_ids.clone(),
        reference_channel: corrs.reference_channel.clone(),
        taper,
        sample_rate: fs,
        max_lag: corrs.max_lag(),
    })
}
