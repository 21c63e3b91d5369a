//! Run orchestration behind the command-line tool: one declarative
//! configuration and the simulate, spectra, identify, compare and campaign
//! commands.
//!
//! Every output embeds a JSON configuration snapshot: text files start with a
//! `# config {...}` line, mode sets carry it in their `config` field. Inputs
//! are named by file name only, so identical runs into different output
//! directories produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::campaign::CampaignConfig;
use crate::error::{Error, Result};
use crate::metrics::compare_runs;
use crate::modeset::{load_modeset, save_modeset_with_config, ModeSet};
use crate::next::{half_spectra_with, next_correlations, CorrelationSet, Taper, DEFAULT_MAX_LAG_S, MIN_OVERSAMPLE};
use crate::record::{load_record, save_record_with_comments, AcquisitionRecord};
use crate::rig::{
    default_sensors, default_truth, simulate_with, ExcitationCase, GroundTruth, SimulationOptions, DEFAULT_NOISE_RMS,
};
use crate::spectral::{anpsd_with, peak_screen, welch_psd, Normalisation, DEFAULT_OVERLAP, DEFAULT_SEGMENT_LENGTH};
use crate::stabilisation::{cluster_modes, run_sweep, StabConfig, StabilisationDiagram};

pub const TOOL: &str = concat!("propvib ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Campaign file for `simulate` and `campaign`; the built-in seven-case
    /// schedule when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub campaign: Option<PathBuf>,
    /// Input records for `spectra` and `identify`.
    pub records: Vec<PathBuf>,
    /// Reference mode set for `compare`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self { campaign: None, records: Vec::new(), baseline: None, out_dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    pub segment_length: usize,
    pub overlap: f64,
    pub normalisation: Normalisation,
    /// Restricts written rows and the peak screen; full range when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band: Option<[f64; 2]>,
    /// Peak-screen prominence relative to the largest in-band value.
    pub peak_prominence: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            segment_length: DEFAULT_SEGMENT_LENGTH,
            overlap: DEFAULT_OVERLAP,
            normalisation: Normalisation::Integral,
            band: None,
            peak_prominence: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NextConfig {
    /// Reference sensor id; the outermost sensor when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    pub max_lag_s: f64,
    pub taper: Taper,
    /// Zero-padding factor of the half-spectrum transform.
    pub oversample: usize,
    /// Keep every `stride`-th half-spectrum bin as Loewner data.
    pub stride: usize,
}

impl Default for NextConfig {
    fn default() -> Self {
        Self {
            reference: None,
            max_lag_s: DEFAULT_MAX_LAG_S,
            taper: Taper::Exponential { decay: 1.0 },
            oversample: MIN_OVERSAMPLE,
            stride: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub spectral: SpectralConfig,
    pub next: NextConfig,
    pub stabilisation: StabConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let s = &self.spectral;
        if s.segment_length < 2 {
            return bad(format!("segment length {} too short", s.segment_length));
        }
        if !(0.0..1.0).contains(&s.overlap) {
            return bad(format!("overlap {} outside [0, 1)", s.overlap));
        }
        if let Some([lo, hi]) = s.band {
            if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
                return bad(format!("spectral band [{lo}, {hi}] is empty or negative"));
            }
        }
        if !(s.peak_prominence.is_finite() && s.peak_prominence >= 0.0) {
            return bad(format!("peak prominence {} must be non-negative", s.peak_prominence));
        }
        let n = &self.next;
        if !(n.max_lag_s.is_finite() && n.max_lag_s > 0.0) {
            return bad(format!("max lag {} must be positive", n.max_lag_s));
        }
        if n.oversample < MIN_OVERSAMPLE {
            return bad(format!("oversample {} below {MIN_OVERSAMPLE}", n.oversample));
        }
        if n.stride == 0 || n.stride > n.oversample {
            return bad(format!("stride {} outside 1..={}", n.stride, n.oversample));
        }
        if let Taper::Exponential { decay } = n.taper {
            if !(decay.is_finite() && decay >= 0.0) {
                return bad(format!("taper decay {decay} must be non-negative"));
            }
        }
        self.stabilisation.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("pipeline config is always representable as TOML")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Processing parameters without paths.
    pub fn snapshot(&self) -> Value {
        json!({
            "spectral": self.spectral,
            "next": self.next,
            "stabilisation": self.stabilisation,
        })
    }

    /// The campaign named in `paths.campaign`, or the built-in schedule.
    pub fn campaign(&self) -> Result<CampaignConfig> {
        match &self.paths.campaign {
            Some(p) => CampaignConfig::load(p),
            None => Ok(CampaignConfig::standard()),
        }
    }
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn command_snapshot(command: &str, inputs: &[String], pipeline: Option<&PipelineConfig>) -> Value {
    let mut v = json!({ "tool": TOOL, "command": command, "inputs": inputs });
    if let Some(cfg) = pipeline {
        v["pipeline"] = cfg.snapshot();
    }
    v
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, snapshot: &Value, body: &str) -> Result<()> {
    fs::write(path, format!("# config {snapshot}\n{body}")).map_err(|e| Error::io(path, e))
}

fn ensure_written(files: &[PathBuf]) -> Result<()> {
    for f in files {
        let len = fs::metadata(f).map_err(|e| Error::io(f, e))?.len();
        if len == 0 {
            return Err(Error::io(f, std::io::Error::other("output file is empty")));
        }
    }
    Ok(())
}

/// Per-case simulation seed: the campaign seed offset by the case's position.
pub fn case_seed(campaign_seed: u64, index: usize) -> u64 {
    campaign_seed.wrapping_add(index as u64)
}

fn simulate_indexed(campaign: &CampaignConfig, index: usize, truth: &GroundTruth) -> Result<AcquisitionRecord> {
    let case = &campaign.cases[index];
    let excitation = ExcitationCase::from_descriptor(case)?;
    let options = SimulationOptions { shape_perturbation: case.shape_perturbation.map(|p| (p.mode - 1, p.level)) };
    simulate_with(
        truth,
        &excitation,
        &default_sensors(),
        campaign.sample_rate_hz,
        case.duration_s,
        DEFAULT_NOISE_RMS,
        case_seed(campaign.seed, index),
        &options,
    )
}

/// Simulates one campaign case on the default rig.
pub fn simulate_case(campaign: &CampaignConfig, label: &str) -> Result<AcquisitionRecord> {
    campaign.validate()?;
    let index = campaign
        .cases
        .iter()
        .position(|c| c.label == label)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown case {label:?}")))?;
    simulate_indexed(campaign, index, &default_truth()?)
}

fn simulate_all(campaign: &CampaignConfig) -> Result<Vec<AcquisitionRecord>> {
    campaign.validate()?;
    let truth = default_truth()?;
    (0..campaign.cases.len()).into_par_iter().map(|i| simulate_indexed(campaign, i, &truth)).collect()
}

fn write_records(campaign: &CampaignConfig, records: &[AcquisitionRecord], out_dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(out_dir)?;
    let campaign_json = serde_json::to_value(campaign)?;
    records
        .par_iter()
        .enumerate()
        .map(|(i, rec)| {
            let snapshot = json!({
                "tool": TOOL,
                "command": "simulate",
                "campaign": campaign_json,
                "case": rec.case_label(),
                "seed": case_seed(campaign.seed, i),
                "noise_rms": DEFAULT_NOISE_RMS,
            });
            let path = out_dir.join(format!("{}.txt", rec.case_label()));
            save_record_with_comments(rec, &path, &[format!("config {snapshot}")])?;
            Ok(path)
        })
        .collect()
}

/// Simulates every campaign case into `<out_dir>/<label>.txt`.
pub fn cmd_simulate(campaign: &CampaignConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let records = simulate_all(campaign)?;
    let files = write_records(campaign, &records, out_dir)?;
    ensure_written(&files)?;
    Ok(files)
}

fn spectra_files(rec: &AcquisitionRecord, input: &Path, cfg: &PipelineConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    create_dir(out_dir)?;
    let s = &cfg.spectral;
    let psd = welch_psd(rec, s.segment_length, s.overlap)?;
    let anpsd = anpsd_with(&psd, s.normalisation)?;
    let nyquist = psd.frequencies.last().copied().unwrap_or(0.0);
    let band = s.band.unwrap_or([0.0, nyquist]);
    let keep: Vec<usize> = (0..psd.frequencies.len())
        .filter(|&i| psd.frequencies[i] >= band[0] && psd.frequencies[i] <= band[1])
        .collect();
    let snapshot = command_snapshot("spectra", &[file_name(input)], Some(cfg));
    let stem = file_stem(input);

    let mut files = Vec::with_capacity(psd.channel_ids.len() + 1);
    for (ch, id) in psd.channel_ids.iter().enumerate() {
        let mut body = format!("# frequency_hz psd_{id}\n");
        for &i in &keep {
            let _ = writeln!(body, "{} {:e}", psd.frequencies[i], psd.values[(ch, i)]);
        }
        let path = out_dir.join(format!("{stem}_psd_{id}.txt"));
        write_text(&path, &snapshot, &body)?;
        files.push(path);
    }

    let peaks = peak_screen(&anpsd, band, s.peak_prominence)?;
    let mut body = String::from("# peaks_hz");
    for p in &peaks {
        let _ = write!(body, " {p}");
    }
    body.push_str("\n# frequency_hz anpsd\n");
    for &i in &keep {
        let _ = writeln!(body, "{} {:e}", anpsd.frequencies[i], anpsd.values[i]);
    }
    let path = out_dir.join(format!("{stem}_anpsd.txt"));
    write_text(&path, &snapshot, &body)?;
    files.push(path);
    ensure_written(&files)?;
    Ok(files)
}

/// Writes one two-column PSD file per channel and one ANPSD file; the ANPSD
/// path is last.
pub fn cmd_spectra(record: &Path, cfg: &PipelineConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let rec = load_record(record)?;
    spectra_files(&rec, record, cfg, out_dir)
}

#[derive(Debug, Clone)]
pub struct Identification {
    pub correlations: CorrelationSet,
    pub diagram: StabilisationDiagram,
    pub modes: ModeSet,
}

/// The configured reference sensor, or the one furthest out along the span.
pub fn reference_sensor(rec: &AcquisitionRecord, cfg: &PipelineConfig) -> Result<String> {
    if let Some(r) = &cfg.next.reference {
        return Ok(r.clone());
    }
    rec.sensors()
        .iter()
        .max_by(|a, b| a.span_position.total_cmp(&b.span_position))
        .map(|s| s.id.clone())
        .ok_or_else(|| Error::InvalidRecord("record has no channels".into()))
}

/// NExT correlations, half-spectra, Loewner stabilisation sweep and mode
/// clustering. A silent reference channel or a sweep in which every order
/// fails is reported as [`Error::NoModes`]; an empty mode set is returned as is.
pub fn identify(rec: &AcquisitionRecord, cfg: &PipelineConfig) -> Result<Identification> {
    cfg.validate()?;
    let reference = reference_sensor(rec, cfg)?;
    let correlations = next_correlations(rec, &reference, cfg.next.max_lag_s)?;
    let ri = correlations.channel_ids.iter().position(|c| *c == reference).unwrap_or(0);
    if !(correlations.values[(ri, 0)] > 0.0) {
        return Err(Error::NoModes(format!("reference channel {reference} carries no signal")));
    }
    let spectra = half_spectra_with(&correlations, cfg.next.taper, cfg.next.oversample)?.decimate(cfg.next.stride);
    let diagram = match run_sweep(&spectra, &cfg.stabilisation) {
        Err(Error::AllOrdersFailed { diagnostics }) => {
            return Err(Error::NoModes(format!("every model order failed: {}", diagnostics.join("; "))))
        }
        r => r?,
    };
    let modes = cluster_modes(&diagram, &cfg.stabilisation)?;
    Ok(Identification { correlations, diagram, modes })
}

fn identify_files(
    rec: &AcquisitionRecord,
    input: &Path,
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<(Vec<PathBuf>, ModeSet)> {
    let id = identify(rec, cfg)?;
    create_dir(out_dir)?;
    let snapshot = command_snapshot("identify", &[file_name(input)], Some(cfg));
    let stem = file_stem(input);

    let c = &id.correlations;
    let mut body = format!("# reference {}\n# lag_s", c.reference_channel);
    for ch in &c.channel_ids {
        let _ = write!(body, " {ch}");
    }
    body.push('\n');
    for (k, lag) in c.lags.iter().enumerate() {
        let _ = write!(body, "{lag}");
        for ch in 0..c.channel_ids.len() {
            let _ = write!(body, " {:e}", c.values[(ch, k)]);
        }
        body.push('\n');
    }
    let corr_path = out_dir.join(format!("{stem}_correlations.txt"));
    write_text(&corr_path, &snapshot, &body)?;

    let diagram_path = out_dir.join(format!("{stem}_diagram.txt"));
    write_text(&diagram_path, &snapshot, &id.diagram.to_text())?;

    let modes_path = out_dir.join(format!("{stem}_modes.json"));
    save_modeset_with_config(&id.modes, &modes_path, Some(&snapshot))?;

    let files = vec![corr_path, diagram_path, modes_path];
    ensure_written(&files)?;
    if id.modes.is_empty() {
        return Err(Error::NoModes(format!("no cluster reached {} stable poles", cfg.stabilisation.min_cluster_size)));
    }
    Ok((files, id.modes))
}

/// Writes the correlation traces, the stabilisation diagram and the mode set.
/// An empty mode set is written, then reported as [`Error::NoModes`].
pub fn cmd_identify(record: &Path, cfg: &PipelineConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let rec = load_record(record)?;
    identify_files(&rec, record, cfg, out_dir).map(|(files, _)| files)
}

fn compare_file(a: &ModeSet, a_name: &str, b: &ModeSet, b_name: &str, out_dir: &Path) -> Result<PathBuf> {
    create_dir(out_dir)?;
    let snapshot = command_snapshot("compare", &[a_name.to_string(), b_name.to_string()], None);
    let strip = |n: &str| {
        let stem = n.rsplit_once('.').map_or(n, |(s, _)| s);
        stem.strip_suffix("_modes").unwrap_or(stem).to_string()
    };
    let path = out_dir.join(format!("{}_vs_{}.txt", strip(a_name), strip(b_name)));
    write_text(&path, &snapshot, &compare_runs(a, b).to_table())?;
    ensure_written(std::slice::from_ref(&path))?;
    Ok(path)
}

/// Compares mode set `b` against reference `a`; returns the report path.
pub fn cmd_compare(a: &Path, b: &Path, out_dir: &Path) -> Result<PathBuf> {
    let (ma, mb) = (load_modeset(a)?, load_modeset(b)?);
    compare_file(&ma, &file_name(a), &mb, &file_name(b), out_dir)
}

#[derive(Debug, Clone, Default)]
pub struct CampaignOutputs {
    pub records: Vec<PathBuf>,
    pub anpsd: Vec<PathBuf>,
    pub psd: Vec<PathBuf>,
    pub identify: Vec<PathBuf>,
    pub modesets: Vec<PathBuf>,
    pub reports: Vec<PathBuf>,
}

/// Full campaign into `records/`, `spectra/`, `identify/` and `compare/`
/// under `out_dir`: every case simulated and screened, the configured cases
/// identified, each compared against the baseline.
pub fn cmd_campaign(campaign: &CampaignConfig, cfg: &PipelineConfig, out_dir: &Path) -> Result<CampaignOutputs> {
    cfg.validate()?;
    let records = simulate_all(campaign)?;
    let mut out =
        CampaignOutputs { records: write_records(campaign, &records, &out_dir.join("records"))?, ..Default::default() };

    let spectra_dir = out_dir.join("spectra");
    let spectra: Vec<Vec<PathBuf>> = records
        .par_iter()
        .zip(&out.records)
        .map(|(rec, path)| spectra_files(rec, path, cfg, &spectra_dir))
        .collect::<Result<_>>()?;
    for mut files in spectra {
        out.anpsd.extend(files.pop());
        out.psd.extend(files);
    }

    let identify_dir = out_dir.join("identify");
    let mut identified = Vec::new();
    for label in &campaign.identify {
        let i = campaign.cases.iter().position(|c| &c.label == label).expect("validated label");
        let (mut files, modes) = identify_files(&records[i], &out.records[i], cfg, &identify_dir)?;
        out.modesets.extend(files.pop());
        out.identify.extend(files);
        identified.push((label.clone(), modes, out.modesets.last().cloned().unwrap_or_default()));
    }

    if let Some(base) = &campaign.baseline {
        let compare_dir = out_dir.join("compare");
        let reference = identified.iter().find(|(l, _, _)| l == base);
        if let Some((_, ref_modes, ref_path)) = reference {
            for (_, modes, path) in identified.iter().filter(|(l, _, _)| l != base) {
                out.reports.push(compare_file(ref_modes, &file_name(ref_path), modes, &file_name(path), &compare_dir)?);
            }
        }
    }
    Ok(out)
}
