use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nalgebra::DMatrix;
use propvib::record::{save_record, AcquisitionRecord};
use propvib::rig::default_sensors;

const CAMPAIGN: &str = r#"
seed = 5
[[case]]
label = "i"
motor = "off"
duration_s = 120.0
"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_propvib")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_spectra_identify_compare() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("campaign.toml"), CAMPAIGN).unwrap();

    let out = run(&["simulate", "--config", p(&d.join("campaign.toml")), "--out-dir", p(&d.join("rec"))]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let record = d.join("rec/i.txt");
    assert!(fs::read_to_string(&record).unwrap().contains("\"seed\":5"));

    let out = run(&["spectra", p(&record), "--out-dir", p(&d.join("spec")), "--band", "0:30"]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 8);
    let anpsd = fs::read_to_string(d.join("spec/i_anpsd.txt")).unwrap();
    let last = anpsd.lines().last().unwrap();
    assert!(last.split_whitespace().next().unwrap().parse::<f64>().unwrap() <= 30.0);

    let args = ["identify", p(&record), "--orders", "32:2:60", "--band", "0:30", "--reference", "A7"];
    let out = run(&[&args[..], &["--out-dir", p(&d.join("id"))]].concat());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let modes = d.join("id/i_modes.json");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&modes).unwrap()).unwrap();
    assert_eq!(json["modes"].as_array().unwrap().len(), 3);
    assert_eq!(json["config"]["pipeline"]["next"]["reference"], "A7");
    let diagram = fs::read_to_string(d.join("id/i_diagram.txt")).unwrap();
    assert!(diagram.lines().nth(1).unwrap().starts_with("# order frequency_hz damping_ratio"));
    let corr = fs::read_to_string(d.join("id/i_correlations.txt")).unwrap();
    assert!(corr.contains("# lag_s A1 A2 A3 A4 A5 A6 A7"));

    // Same inputs into a second directory: identical bytes.
    let out = run(&[&args[..], &["--out-dir", p(&d.join("id2"))]].concat());
    assert_eq!(code(&out), 0);
    for f in ["i_modes.json", "i_diagram.txt", "i_correlations.txt"] {
        assert_eq!(fs::read(d.join("id").join(f)).unwrap(), fs::read(d.join("id2").join(f)).unwrap(), "{f}");
    }

    let out = run(&["compare", p(&modes), p(&modes), "--out-dir", p(&d.join("cmp"))]);
    assert_eq!(code(&out), 0);
    let report = fs::read_to_string(d.join("cmp/i_vs_i.txt")).unwrap();
    assert_eq!(report.matches(" 1.000").count(), 3, "{report}");
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    assert_eq!(code(&run(&["identify", p(&d.join("missing.txt")), "--out-dir", p(d)])), 3);
    assert_eq!(code(&run(&["identify", "x.txt", "--orders", "32:2"])), 2);
    assert_eq!(code(&run(&["identify", "x.txt", "--orders", "31:2:60"])), 2);
    fs::write(d.join("bad.toml"), "[next]\nstride = 0\n").unwrap();
    assert_eq!(code(&run(&["identify", "x.txt", "--config", p(&d.join("bad.toml"))])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);

    let sensors = default_sensors();
    let zero =
        AcquisitionRecord::new(sensors.clone(), 1066.0, DMatrix::zeros(sensors.len(), 60 * 1066), "zero").unwrap();
    save_record(&zero, d.join("zero.txt")).unwrap();
    let out = run(&["identify", p(&d.join("zero.txt")), "--out-dir", p(d)]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no modes found"));

    fs::write(d.join("garbage.txt"), "#rate_hz 10\nnot numbers\n").unwrap();
    assert_eq!(code(&run(&["spectra", p(&d.join("garbage.txt")), "--out-dir", p(d)])), 5);
}
