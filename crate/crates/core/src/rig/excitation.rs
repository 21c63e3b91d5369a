//! Forcing descriptions for the vibration test cases.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::campaign::{CaseDescriptor, MotorCondition};
use crate::error::{Error, Result};

/// Affine throttle to shaft-rate map, `rate = intercept + slope * throttle`.
/// The defaults put the second shaft harmonic at 42 Hz for 25% throttle and
/// at 102 Hz for 62.5% throttle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShaftRateMap {
    pub intercept_hz: f64,
    pub slope_hz: f64,
}

impl Default for ShaftRateMap {
    fn default() -> Self {
        Self { intercept_hz: 1.0, slope_hz: 80.0 }
    }
}

impl ShaftRateMap {
    pub fn shaft_rate(&self, throttle: f64) -> f64 {
        self.intercept_hz + self.slope_hz * throttle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    /// Multiple of the shaft rate.
    pub multiple: f64,
    /// Relative amplitude.
    pub amplitude: f64,
}

pub fn default_harmonics() -> Vec<Harmonic> {
    [(2.0, 1.0), (3.0, 0.5), (4.0, 0.3)].iter().map(|&(multiple, amplitude)| Harmonic { multiple, amplitude }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExcitationKind {
    Impulse {
        hit_times: Vec<f64>,
        /// Span station, m.
        station: f64,
        /// N
        peak_force: f64,
        /// Half-sine duration, s.
        pulse_width: f64,
    },
    ConstantThrottle {
        fraction: f64,
    },
    Sweep {
        min: f64,
        max: f64,
        /// One full up-down cycle, s.
        period: f64,
    },
}

pub const DEFAULT_IMPULSE_STATION: f64 = 0.75;
/// Bracket offset between the propeller axis and the spar, m.
pub const DEFAULT_MOMENT_ARM: f64 = 0.05;
pub const DEFAULT_IMPULSE_FORCE: f64 = 0.25;
pub const DEFAULT_PULSE_WIDTH: f64 = 0.005;
/// Broadband force standard deviation per sample while the motor runs, N.
pub const DEFAULT_BROADBAND_LEVEL: f64 = 0.02;
/// Force amplitude of a unit-relative harmonic, N.
pub const DEFAULT_HARMONIC_FORCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationCase {
    pub label: String,
    pub kind: ExcitationKind,
    /// Offset of the thrust line from the spar axis, m. Motor forces also
    /// apply a moment `force * moment_arm` at the motor station.
    #[serde(default)]
    pub moment_arm: f64,
    pub broadband_level: f64,
    pub harmonic_force: f64,
    pub shaft_map: ShaftRateMap,
    pub harmonics: Vec<Harmonic>,
}

impl ExcitationCase {
    /// Hammer hits at `hit_times` near the tip, motor off.
    pub fn impulse(label: &str, hit_times: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            kind: ExcitationKind::Impulse {
                hit_times,
                station: DEFAULT_IMPULSE_STATION,
                peak_force: DEFAULT_IMPULSE_FORCE,
                pulse_width: DEFAULT_PULSE_WIDTH,
            },
            moment_arm: 0.0,
            broadband_level: 0.0,
            harmonic_force: 0.0,
            shaft_map: ShaftRateMap::default(),
            harmonics: default_harmonics(),
        }
    }

    pub fn constant(label: &str, fraction: f64) -> Self {
        Self {
            label: label.into(),
            kind: ExcitationKind::ConstantThrottle { fraction },
            moment_arm: DEFAULT_MOMENT_ARM,
            broadband_level: DEFAULT_BROADBAND_LEVEL,
            harmonic_force: DEFAULT_HARMONIC_FORCE,
            shaft_map: ShaftRateMap::default(),
            harmonics: default_harmonics(),
        }
    }

    pub fn sweep(label: &str, min: f64, max: f64, period: f64) -> Self {
        Self { kind: ExcitationKind::Sweep { min, max, period }, ..Self::constant(label, min) }
    }

    /// Maps a campaign case onto the rig: motor-off cases become two hits
    /// 60 s apart (2 s and 62 s, or at 1/60 and 31/60 of shorter records),
    /// sweeps run one up-down cycle over the case duration.
    pub fn from_descriptor(case: &CaseDescriptor) -> Result<Self> {
        case.validate()?;
        Ok(match case.motor {
            MotorCondition::Off => {
                let d = case.duration_s;
                let hits = if d >= 120.0 { vec![2.0, 62.0] } else { vec![d / 60.0, d * 31.0 / 60.0] };
                Self::impulse(&case.label, hits)
            }
            MotorCondition::Constant => Self::constant(&case.label, case.throttle[0]),
            MotorCondition::Sweep => Self::sweep(&case.label, case.throttle[0], case.throttle[1], case.duration_s),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Simulation(format!("case {:?}: {m}", self.label)));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        match &self.kind {
            ExcitationKind::Impulse { hit_times, pulse_width, peak_force, .. } => {
                if !(*pulse_width > 0.0) {
                    return bad("pulse width must be positive");
                }
                if !peak_force.is_finite() || hit_times.iter().any(|t| !t.is_finite()) {
                    return bad("impulse parameters must be finite");
                }
            }
            ExcitationKind::ConstantThrottle { fraction } if !unit(*fraction) => return bad("throttle outside [0, 1]"),
            ExcitationKind::Sweep { min, max, period } => {
                if !(unit(*min) && unit(*max) && min <= max) {
                    return bad("sweep bounds outside [0, 1] or reversed");
                }
                if !(*period > 0.0) {
                    return bad("sweep period must be positive");
                }
            }
            _ => {}
        }
        if self.harmonics.iter().any(|h| !(h.amplitude >= 0.0 && h.multiple > 0.0)) {
            return bad("harmonic amplitudes must be non-negative");
        }
        if !self.moment_arm.is_finite() {
            return bad("moment arm must be finite");
        }
        if !(self.broadband_level >= 0.0 && self.harmonic_force >= 0.0) {
            return bad("force levels must be non-negative");
        }
        Ok(())
    }

    /// Span station where the force acts; motor cases use `motor_station`.
    pub fn forcing_station(&self, motor_station: f64) -> f64 {
        match self.kind {
            ExcitationKind::Impulse { station, .. } => station,
            _ => motor_station,
        }
    }
}

/// Throttle fraction at time `t`; motor-off cases return 0.
pub fn throttle_profile(case: &ExcitationCase, t: f64) -> f64 {
    match case.kind {
        ExcitationKind::Impulse { .. } => 0.0,
        ExcitationKind::ConstantThrottle { fraction } => fraction,
        ExcitationKind::Sweep { min, max, period } => {
            let phase = (t / period).rem_euclid(1.0);
            let tri = if phase < 0.5 { 2.0 * phase } else { 2.0 - 2.0 * phase };
            min + (max - min) * tri
        }
    }
}

/// Deterministic part of the force history (impulses or harmonics), sampled at
/// `n` steps of `1/fs`.
pub(crate) fn deterministic_force(case: &ExcitationCase, fs: f64, n: usize) -> Vec<f64> {
    let dt = 1.0 / fs;
    match &case.kind {
        ExcitationKind::Impulse { hit_times, peak_force, pulse_width, .. } => {
            let mut f = vec![0.0; n];
            for (k, v) in f.iter_mut().enumerate() {
                let t = k as f64 * dt;
                for &t0 in hit_times {
                    let s = t - t0;
                    if (0.0..*pulse_width).contains(&s) {
                        *v += peak_force * (PI * s / pulse_width).sin();
                    }
                }
            }
            f
        }
        _ => {
            let mut phase = 0.0;
            (0..n)
                .map(|k| {
                    let rate = case.shaft_map.shaft_rate(throttle_profile(case, k as f64 * dt));
                    let v = case.harmonics.iter().map(|h| h.amplitude * (h.multiple * phase).sin()).sum::<f64>();
                    phase += 2.0 * PI * rate * dt;
                    case.harmonic_force * v
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_is_a_triangle() {
        let c = ExcitationCase::sweep("vii", 0.125, 0.775, 600.0);
        assert!((throttle_profile(&c, 300.0) - 0.775).abs() < 1e-12);
        assert!((throttle_profile(&c, 0.0) - 0.125).abs() < 1e-12);
        assert!((throttle_profile(&c, 600.0) - 0.125).abs() < 1e-12);
        assert!((throttle_profile(&c, 150.0) - 0.45).abs() < 1e-12);
    }

    #[test]
    fn constant_throttle_is_flat() {
        let c = ExcitationCase::constant("iv", 0.5);
        for t in [0.0, 17.3, 299.9] {
            assert_eq!(throttle_profile(&c, t), 0.5);
        }
    }

    #[test]
    fn shaft_map_places_harmonics() {
        let m = ShaftRateMap::default();
        assert!((2.0 * m.shaft_rate(0.25) - 42.0).abs() < 1e-12);
        assert!(2.0 * m.shaft_rate(0.625) > 100.0);
    }

    #[test]
    fn half_sine_pulses_have_the_requested_peak() {
        let c = ExcitationCase::impulse("i", vec![1.0]);
        let f = deterministic_force(&c, 10_000.0, 20_000);
        let peak = f.iter().cloned().fold(0.0, f64::max);
        assert!((peak - DEFAULT_IMPULSE_FORCE).abs() < 1e-3);
        assert!(f[..10_000].iter().all(|v| *v == 0.0));
        assert!(f[10_050..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn descriptors_map_to_cases() {
        let cfg = crate::campaign::CampaignConfig::standard();
        let i = ExcitationCase::from_descriptor(&cfg.cases[0]).unwrap();
        assert!(matches!(i.kind, ExcitationKind::Impulse { ref hit_times, .. } if hit_times == &vec![2.0, 62.0]));
        let vii = ExcitationCase::from_descriptor(&cfg.cases[6]).unwrap();
        assert_eq!(vii.kind, ExcitationKind::Sweep { min: 0.125, max: 0.775, period: 600.0 });
        let mut bad = ExcitationCase::constant("x", 0.5);
        bad.harmonics[0].amplitude = -1.0;
        assert!(bad.validate().is_err());
    }
}
