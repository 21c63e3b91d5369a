//! Test-campaign description: one descriptor per vibration test case.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 1066.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotorCondition {
    Off,
    Constant,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseDescriptor {
    pub label: String,
    pub motor: MotorCondition,
    /// Throttle fractions: empty when off, one value when constant,
    /// `[start, end]` for a sweep.
    #[serde(default)]
    pub throttle: Vec<f64>,
    pub duration_s: f64,
    /// Off unless set; emulates a distorted measured shape for one mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape_perturbation: Option<ShapePerturbation>,
}

/// Independent Gaussian noise added to one mode's shape at the sensor
/// stations, `level` relative to the shape's rms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapePerturbation {
    /// 1-based mode number.
    pub mode: usize,
    pub level: f64,
}

impl CaseDescriptor {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(format!("case {:?}: {msg}", self.label)));
        if self.label.is_empty() || self.label.contains(|c: char| c.is_whitespace() || c == '/') {
            return bad("label must be a non-empty token".into());
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad(format!("duration must be positive, got {}", self.duration_s));
        }
        if let Some(p) = self.shape_perturbation {
            if p.mode == 0 || !(p.level.is_finite() && p.level >= 0.0) {
                return bad(format!("invalid shape perturbation {p:?}"));
            }
        }
        if let Some(t) = self.throttle.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return bad(format!("throttle {t} outside [0, 1]"));
        }
        match (self.motor, self.throttle.as_slice()) {
            (MotorCondition::Off, []) => Ok(()),
            (MotorCondition::Off, _) => bad("motor-off case takes no throttle".into()),
            (MotorCondition::Constant, [_]) => Ok(()),
            (MotorCondition::Constant, _) => bad("constant case takes exactly one throttle".into()),
            (MotorCondition::Sweep, [a, b]) if a < b => Ok(()),
            (MotorCondition::Sweep, _) => bad("sweep takes two throttle endpoints with start < end".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub seed: u64,
    /// Cases that go through modal identification in a full campaign run.
    #[serde(default)]
    pub identify: Vec<String>,
    /// Case whose identified modes serve as the comparison reference.
    #[serde(default)]
    pub baseline: Option<String>,
    #[serde(rename = "case")]
    pub cases: Vec<CaseDescriptor>,
}

fn default_rate() -> f64 {
    DEFAULT_SAMPLE_RATE_HZ
}

impl CampaignConfig {
    /// The seven-case schedule: motor-off impulse reference, five constant
    /// throttle settings and one up-down sweep.
    pub fn standard() -> Self {
        let case = |label: &str, motor, throttle: &[f64], duration_s| CaseDescriptor {
            label: label.into(),
            motor,
            throttle: throttle.to_vec(),
            duration_s,
            shape_perturbation: None,
        };
        use MotorCondition::*;
        Self {
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            seed: 2026,
            identify: vec!["i".into(), "vii".into()],
            baseline: Some("i".into()),
            cases: vec![
                case("i", Off, &[], 120.0),
                case("ii", Constant, &[0.25], 300.0),
                case("iii", Constant, &[0.375], 300.0),
                case("iv", Constant, &[0.50], 300.0),
                case("v", Constant, &[0.625], 300.0),
                case("vi", Constant, &[0.75], 300.0),
                case("vii", Sweep, &[0.125, 0.775], 600.0),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if self.cases.is_empty() {
            return Err(Error::InvalidConfig("campaign has no cases".into()));
        }
        let mut labels = HashSet::new();
        for c in &self.cases {
            c.validate()?;
            if !labels.insert(c.label.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate case label {:?}", c.label)));
            }
        }
        for l in self.identify.iter().chain(self.baseline.iter()) {
            if !labels.contains(l.as_str()) {
                return Err(Error::InvalidConfig(format!("unknown case {l:?}")));
            }
        }
        Ok(())
    }

    pub fn case(&self, label: &str) -> Option<&CaseDescriptor> {
        self.cases.iter().find(|c| c.label == label)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("campaign config is always representable as TOML")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_schedule_is_valid_and_round_trips() {
        let cfg = CampaignConfig::standard();
        cfg.validate().unwrap();
        assert_eq!(cfg.cases.len(), 7);
        assert_eq!(CampaignConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let durations: Vec<f64> = cfg.cases.iter().map(|c| c.duration_s).collect();
        assert_eq!(durations, [120.0, 300.0, 300.0, 300.0, 300.0, 300.0, 600.0]);
    }

    #[test]
    fn throttle_invariants() {
        let mut c = CampaignConfig::standard().cases[6].clone();
        c.throttle = vec![0.775, 0.125];
        assert!(c.validate().is_err());
        c.throttle = vec![0.125, 1.2];
        assert!(c.validate().is_err());
        c.motor = MotorCondition::Constant;
        c.throttle = vec![-0.1];
        assert!(c.validate().is_err());
    }

    #[test]
    fn shape_perturbation_is_optional_and_checked() {
        let mut cfg = CampaignConfig::standard();
        assert!(!cfg.to_toml().contains("shape_perturbation"));
        cfg.cases[6].shape_perturbation = Some(ShapePerturbation { mode: 3, level: 0.5 });
        assert_eq!(CampaignConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        cfg.cases[6].shape_perturbation = Some(ShapePerturbation { mode: 0, level: 0.5 });
        assert!(cfg.validate().is_err());
        cfg.cases[6].shape_perturbation = Some(ShapePerturbation { mode: 3, level: -1.0 });
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn parses_minimal_toml() {
        let cfg = CampaignConfig::from_toml(
            r#"
            [[case]]
            label = "i"
            motor = "off"
            duration_s = 10.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.sample_rate_hz, 1066.0);
        assert!(
            CampaignConfig::from_toml("[[case]]\nlabel='x'\nmotor='sweep'\nthrottle=[0.5]\nduration_s=1.0").is_err()
        );
    }
}
