//! Identified modal parameters and their versioned JSON file format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODESET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub frequency_hz: f64,
    pub damping_ratio: f64,
    /// Complex shape over channels, in record channel order.
    pub shape: Vec<Complex64>,
    /// Number of stable poles supporting this mode.
    pub cluster_size: usize,
}

/// Modes sorted by ascending frequency, all sharing one channel count.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModeSet {
    modes: Vec<Mode>,
}

impl ModeSet {
    pub fn new(mut modes: Vec<Mode>) -> Result<Self> {
        modes.sort_by(|a, b| a.frequency_hz.total_cmp(&b.frequency_hz));
        let channels = modes.first().map(|m| m.shape.len());
        for (i, m) in modes.iter().enumerate() {
            if !(m.frequency_hz.is_finite() && m.frequency_hz > 0.0) {
                return Err(Error::InvalidModeSet(format!(
                    "mode {} has non-positive frequency {}",
                    i + 1,
                    m.frequency_hz
                )));
            }
            if !(m.damping_ratio > 0.0 && m.damping_ratio < 1.0) {
                return Err(Error::InvalidModeSet(format!(
                    "mode {} damping ratio {} outside (0, 1)",
                    i + 1,
                    m.damping_ratio
                )));
            }
            if Some(m.shape.len()) != channels || m.shape.is_empty() {
                return Err(Error::InvalidModeSet(format!(
                    "mode {} shape has {} entries, expected {}",
                    i + 1,
                    m.shape.len(),
                    channels.unwrap_or(0)
                )));
            }
            if m.shape.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
                return Err(Error::InvalidModeSet(format!("mode {} shape is not finite", i + 1)));
            }
        }
        Ok(Self { modes })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn channel_count(&self) -> Option<usize> {
        self.modes.first().map(|m| m.shape.len())
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.frequency_hz).collect()
    }

    pub fn damping_ratios(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.damping_ratio).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct ModeFile {
    frequency_hz: f64,
    damping_ratio: f64,
    shape: Vec<[f64; 2]>,
    cluster_size: usize,
}

#[derive(Serialize, Deserialize)]
struct ModeSetFile {
    schema_version: u32,
    modes: Vec<ModeFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<serde_json::Value>,
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: u32,
}

pub fn modeset_to_json(modes: &ModeSet, config: Option<&serde_json::Value>) -> Result<String> {
    let file = ModeSetFile {
        schema_version: MODESET_SCHEMA_VERSION,
        modes: modes
            .modes
            .iter()
            .map(|m| ModeFile {
                frequency_hz: m.frequency_hz,
                damping_ratio: m.damping_ratio,
                shape: m.shape.iter().map(|c| [c.re, c.im]).collect(),
                cluster_size: m.cluster_size,
            })
            .collect(),
        config: config.cloned(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn modeset_from_json(text: &str) -> Result<ModeSet> {
    let probe: VersionProbe = serde_json::from_str(text)?;
    if probe.schema_version != MODESET_SCHEMA_VERSION {
        return Err(Error::SchemaVersion { found: probe.schema_version, expected: MODESET_SCHEMA_VERSION });
    }
    let file: ModeSetFile = serde_json::from_str(text)?;
    ModeSet::new(
        file.modes
            .into_iter()
            .map(|m| Mode {
                frequency_hz: m.frequency_hz,
                damping_ratio: m.damping_ratio,
                shape: m.shape.into_iter().map(|[re, im]| Complex64::new(re, im)).collect(),
                cluster_size: m.cluster_size,
            })
            .collect(),
    )
}

pub fn save_modeset(modes: &ModeSet, path: impl AsRef<Path>) -> Result<()> {
    save_modeset_with_config(modes, path, None)
}

/// Like [`save_modeset`], embedding `config` as the run's configuration snapshot.
pub fn save_modeset_with_config(
    modes: &ModeSet,
    path: impl AsRef<Path>,
    config: Option<&serde_json::Value>,
) -> Result<()> {
    let path = path.as_ref();
    let text = modeset_to_json(modes, config)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(text.as_bytes())
        .and_then(|_| out.write_all(b"\n"))
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_modeset(path: impl AsRef<Path>) -> Result<ModeSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    std::io::Read::read_to_string(&mut BufReader::new(file), &mut text).map_err(|e| Error::io(path, e))?;
    modeset_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture() -> ModeSet {
        let shape = |k: f64| (0..7).map(|c| Complex64::new((c as f64 * k).sin(), 0.01 * c as f64)).collect();
        ModeSet::new(vec![
            Mode { frequency_hz: 2.48, damping_ratio: 0.008, shape: shape(0.3), cluster_size: 15 },
            Mode { frequency_hz: 13.37, damping_ratio: 0.012, shape: shape(0.9), cluster_size: 14 },
            Mode { frequency_hz: 24.10, damping_ratio: 0.028, shape: shape(1.7), cluster_size: 12 },
        ])
        .unwrap()
    }

    #[test]
    fn round_trip_reproduces_reference_modes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("modes.json");
        let m = fixture();
        save_modeset(&m, &path).unwrap();
        assert_eq!(load_modeset(&path).unwrap(), m);
    }

    #[test]
    fn empty_set_round_trips() {
        let text = modeset_to_json(&ModeSet::empty(), None).unwrap();
        assert!(modeset_from_json(&text).unwrap().is_empty());
    }

    #[test]
    fn damping_outside_unit_interval_is_rejected_on_load() {
        let text = r#"{"schema_version": 1, "modes": [
            {"frequency_hz": 2.0, "damping_ratio": 1.5, "shape": [[1.0, 0.0]], "cluster_size": 3}]}"#;
        assert!(matches!(modeset_from_json(text), Err(Error::InvalidModeSet(_))));
    }

    #[test]
    fn schema_version_mismatch_is_rejected() {
        let text = r#"{"schema_version": 7, "modes": []}"#;
        assert!(matches!(modeset_from_json(text), Err(Error::SchemaVersion { found: 7, expected: 1 })));
    }

    #[test]
    fn unwritable_path_is_an_error() {
        let err = save_modeset(&fixture(), "/nonexistent-dir/sub/modes.json");
        assert!(matches!(err, Err(Error::Io { .. })));
    }

    #[test]
    fn modes_are_sorted_and_shapes_checked() {
        let m = fixture();
        let mut modes = m.modes().to_vec();
        modes.reverse();
        assert_eq!(ModeSet::new(modes.clone()).unwrap(), m);
        modes[0].shape.pop();
        assert!(ModeSet::new(modes).is_err());
    }

    proptest! {
        #[test]
        fn json_round_trip_is_lossless(
            f in 1e-3f64..1e4,
            z in 1e-6f64..0.999,
            shape in prop::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 1..12),
        ) {
            let m = ModeSet::new(vec![Mode {
                frequency_hz: f,
                damping_ratio: z,
                shape: shape.iter().map(|&(re, im)| Complex64::new(re, im)).collect(),
                cluster_size: 5,
            }]).unwrap();
            let back = modeset_from_json(&modeset_to_json(&m, None).unwrap()).unwrap();
            let (a, b) = (&m.modes()[0], &back.modes()[0]);
            prop_assert!((a.frequency_hz - b.frequency_hz).abs() <= 1e-12 * a.frequency_hz);
            prop_assert!((a.damping_ratio - b.damping_ratio).abs() <= 1e-12 * a.damping_ratio);
            for (x, y) in a.shape.iter().zip(&b.shape) {
                prop_assert!((x - y).norm() <= 1e-12 * x.norm().max(1e-300));
            }
        }
    }
}
