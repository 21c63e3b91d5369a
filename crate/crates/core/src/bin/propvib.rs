use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use propvib::campaign::CampaignConfig;
use propvib::error::{Error, Result};
use propvib::pipeline::{cmd_campaign, cmd_compare, cmd_identify, cmd_simulate, cmd_spectra, PipelineConfig};

/// Output-only modal analysis of cantilever vibration records.
///
/// Exit status: 0 success, 1 internal error, 2 usage or configuration error,
/// 3 missing input file, 4 no modes found, 5 invalid data.
#[derive(Parser)]
#[command(name = "propvib", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every case of a campaign file into one record file per case.
    Simulate {
        /// Campaign TOML; the built-in seven-case schedule when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Per-channel PSD files and one ANPSD file per record.
    Spectra {
        records: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Stabilisation diagram, correlation traces and mode set per record.
    Identify {
        records: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare a mode set against a reference mode set.
    Compare {
        /// `[REFERENCE] CASE`; the reference defaults to `paths.baseline`.
        #[arg(num_args = 1..=2, required = true)]
        modesets: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate, screen, identify and compare a whole campaign.
    Campaign {
        /// Campaign TOML; overrides `paths.campaign`.
        #[arg(long)]
        campaign: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Pipeline TOML; defaults apply to every omitted field.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Frequency band `LO:HI` in Hz (identification band, spectra output band).
    #[arg(long, value_parser = parse_band)]
    band: Option<[f64; 2]>,
    /// Model orders `K_MIN:STEP:K_MAX`.
    #[arg(long, value_parser = parse_orders)]
    orders: Option<[usize; 3]>,
    /// NExT reference sensor id.
    #[arg(long)]
    reference: Option<String>,
}

fn parse_band(s: &str) -> std::result::Result<[f64; 2], String> {
    let v: Vec<f64> =
        s.split(':').map(str::parse).collect::<std::result::Result<_, _>>().map_err(|e| format!("{e}"))?;
    match v[..] {
        [lo, hi] if lo < hi => Ok([lo, hi]),
        _ => Err("expected LO:HI with LO < HI".into()),
    }
}

fn parse_orders(s: &str) -> std::result::Result<[usize; 3], String> {
    let v: Vec<usize> =
        s.split(':').map(str::parse).collect::<std::result::Result<_, _>>().map_err(|e| format!("{e}"))?;
    match v[..] {
        [a, b, c] => Ok([a, b, c]),
        _ => Err("expected K_MIN:STEP:K_MAX".into()),
    }
}

impl Common {
    fn resolve(&self) -> Result<(PipelineConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(band) = self.band {
            cfg.stabilisation.frequency_range = band;
            cfg.spectral.band = Some(band);
        }
        if let Some([k_min, k_step, k_max]) = self.orders {
            cfg.stabilisation.k_min = k_min;
            cfg.stabilisation.k_step = k_step;
            cfg.stabilisation.k_max = k_max;
        }
        if let Some(r) = &self.reference {
            cfg.next.reference = Some(r.clone());
        }
        cfg.validate()?;
        let out = self.out_dir.clone().unwrap_or_else(|| cfg.paths.out_dir.clone());
        Ok((cfg, out))
    }
}

fn inputs(given: &[PathBuf], cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let list = if given.is_empty() { cfg.paths.records.clone() } else { given.to_vec() };
    if list.is_empty() {
        return Err(Error::InvalidConfig("no input records given".into()));
    }
    Ok(list)
}

fn load_campaign(path: Option<&Path>, seed: Option<u64>) -> Result<CampaignConfig> {
    let mut campaign = match path {
        Some(p) => CampaignConfig::load(p)?,
        None => CampaignConfig::standard(),
    };
    if let Some(s) = seed {
        campaign.seed = s;
    }
    campaign.validate()?;
    Ok(campaign)
}

fn print_all(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, seed, out_dir } => {
            let campaign = load_campaign(config.as_deref(), seed)?;
            let out = out_dir.unwrap_or_else(|| PathBuf::from("out"));
            print_all(&cmd_simulate(&campaign, &out)?);
        }
        Command::Spectra { records, common } => {
            let (cfg, out) = common.resolve()?;
            for r in inputs(&records, &cfg)? {
                print_all(&cmd_spectra(&r, &cfg, &out)?);
            }
        }
        Command::Identify { records, common } => {
            let (cfg, out) = common.resolve()?;
            for r in inputs(&records, &cfg)? {
                print_all(&cmd_identify(&r, &cfg, &out)?);
            }
        }
        Command::Compare { modesets, common } => {
            let (cfg, out) = common.resolve()?;
            let (a, b) = match &modesets[..] {
                [a, b] => (a.clone(), b.clone()),
                [b] => {
                    let a = cfg.paths.baseline.clone().ok_or_else(|| {
                        Error::InvalidConfig("one mode set given and no paths.baseline configured".into())
                    })?;
                    (a, b.clone())
                }
                _ => unreachable!("clap enforces one or two mode sets"),
            };
            println!("{}", cmd_compare(&a, &b, &out)?.display());
        }
        Command::Campaign { campaign, seed, common } => {
            let (cfg, out) = common.resolve()?;
            let path = campaign.or_else(|| cfg.paths.campaign.clone());
            let campaign = load_campaign(path.as_deref(), seed)?;
            let o = cmd_campaign(&campaign, &cfg, &out)?;
            for files in [&o.records, &o.psd, &o.anpsd, &o.identify, &o.modesets, &o.reports] {
                print_all(files);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("propvib: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
