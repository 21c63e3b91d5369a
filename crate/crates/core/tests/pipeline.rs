use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use propvib::campaign::CampaignConfig;
use propvib::error::{exit, Error};
use propvib::metrics::mac;
use propvib::modeset::load_modeset;
use propvib::pipeline::{cmd_campaign, cmd_compare, cmd_identify, PipelineConfig};
use propvib::record::{save_record, AcquisitionRecord};
use propvib::rig::default_sensors;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn pinned_sweep_mode_three_mac() {
    let reference = load_modeset(fixture("mac_reference_modes.json")).unwrap();
    let sweep = load_modeset(fixture("mac_sweep_modes.json")).unwrap();
    assert_eq!((reference.len(), sweep.len()), (3, 3));
    let m3 = mac(&reference.modes()[2].shape, &sweep.modes()[2].shape).unwrap();
    assert!((m3 - 0.827).abs() <= 0.001, "{m3}");
    for j in 0..2 {
        assert!(mac(&reference.modes()[j].shape, &sweep.modes()[j].shape).unwrap() > 0.99);
    }
}

fn starts_with_snapshot(path: &Path) -> bool {
    let text = fs::read_to_string(path).unwrap();
    let first = text.lines().find(|l| l.starts_with("# config ")).unwrap_or_default();
    serde_json::from_str::<serde_json::Value>(&first["# config ".len().min(first.len())..])
        .is_ok_and(|v| v["tool"].is_string())
}

/// One full campaign: output counts, snapshots, and regeneration of the
/// pinned mode-set fixtures.
#[test]
fn campaign_outputs_and_fixture_regeneration() {
    let campaign = CampaignConfig::load(fixture("mac_campaign.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = cmd_campaign(&campaign, &PipelineConfig::default(), dir.path()).unwrap();
    assert_eq!(out.records.len(), 7);
    assert_eq!(out.anpsd.len(), 7);
    assert_eq!(out.psd.len(), 49);
    assert_eq!(out.modesets.len(), 2);
    assert_eq!(out.reports.len(), 1);

    for f in out.records.iter().chain(&out.anpsd).chain(&out.psd).chain(&out.identify).chain(&out.reports) {
        assert!(fs::metadata(f).unwrap().len() > 0);
        assert!(starts_with_snapshot(f), "{}", f.display());
    }
    for f in &out.modesets {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(f).unwrap()).unwrap();
        assert_eq!(v["config"]["command"], "identify");
    }

    for (produced, pinned) in out.modesets.iter().zip(["mac_reference_modes.json", "mac_sweep_modes.json"]) {
        assert_eq!(fs::read(produced).unwrap(), fs::read(fixture(pinned)).unwrap(), "{pinned} drifted");
    }
    let report = fs::read_to_string(&out.reports[0]).unwrap();
    assert!(report.lines().any(|l| l.trim_start().starts_with('3') && l.trim_end().ends_with("0.827")), "{report}");
}

#[test]
fn comparing_a_mode_set_with_itself_gives_zeros_and_unit_macs() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture("mac_reference_modes.json");
    let report = fs::read_to_string(cmd_compare(&m, &m, dir.path()).unwrap()).unwrap();
    let rows: Vec<Vec<&str>> = report
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim_start().starts_with("mode"))
        .map(|l| l.split_whitespace().collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert_eq!((r[3], r[6], r[7]), ("0.00", "0.00", "1.000"), "{r:?}");
    }
}

#[test]
fn all_zero_record_reports_no_modes() {
    let dir = tempfile::tempdir().unwrap();
    let sensors = default_sensors();
    let rec =
        AcquisitionRecord::new(sensors.clone(), 1066.0, DMatrix::zeros(sensors.len(), 60 * 1066), "zero").unwrap();
    let path = dir.path().join("zero.txt");
    save_record(&rec, &path).unwrap();
    let err = cmd_identify(&path, &PipelineConfig::default(), dir.path()).unwrap_err();
    assert!(matches!(err, Error::NoModes(_)), "{err}");
    assert_eq!(err.exit_code(), exit::NO_MODES);
}

#[test]
fn missing_input_is_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_identify(&dir.path().join("absent.txt"), &PipelineConfig::default(), dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), exit::MISSING_FILE);
    let err = cmd_compare(&dir.path().join("a.json"), &dir.path().join("b.json"), dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), exit::MISSING_FILE);
}
