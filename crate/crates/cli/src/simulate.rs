use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use nof1_core::simulation::{run_study, Preset, SimulationSpec, StudyReport};
use serde::{Deserialize, Serialize};

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";
pub const MANIFEST_JSON: &str = "manifest.json";

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Study preset.
    #[arg(long, value_parser = ["fig1", "table2"], required_unless_present = "manifest")]
    pub preset: Option<String>,
    /// Re-run the study recorded in a manifest.
    #[arg(long, conflicts_with_all = ["preset", "m", "seed"])]
    pub manifest: Option<PathBuf>,
    /// Monte Carlo replications.
    #[arg(long = "m", visible_alias = "M", value_parser = clap::value_parser!(u64).range(1..))]
    pub m: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for report.csv, report.json and manifest.json.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: Option<u64>,
    /// Allow overriding preset parameters.
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// Changes applied to every setting of a preset.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct Overrides {
    /// Number of blocks.
    #[arg(long = "blocks")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<usize>,
    /// Time points per block.
    #[arg(long = "block-len")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_len: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[arg(long = "noise-sd")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sd: Option<f64>,
}

impl Overrides {
    pub fn is_empty(&self) -> bool {
        *self == Overrides::default()
    }

    pub fn apply(&self, spec: &mut SimulationSpec) {
        let c = &mut spec.config;
        if let Some(k) = self.blocks {
            c.num_blocks = k;
        }
        if let Some(t) = self.block_len {
            c.block_len = t;
        }
        if let Some(a) = self.alpha {
            c.alpha = a;
            c.eta = Preset::eta(a);
        }
        if let Some(e) = self.eta {
            c.eta = e;
        }
        if let Some(sd) = self.noise_sd {
            spec.dgp.noise_sd = sd;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    pub csv: PathBuf,
    pub json: PathBuf,
}

/// Everything needed to reproduce a run. `jobs` is left out because it
/// does not affect the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub study: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Overrides::is_empty")]
    pub overrides: Overrides,
    pub m: usize,
    pub seed: u64,
    pub specs: Vec<SimulationSpec>,
    pub outputs: Outputs,
}

pub const DEFAULT_M: u64 = 1000;
pub const DEFAULT_SEED: u64 = 7;

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Resolves the arguments into a manifest without running anything.
/// Returns `Err` with a usage message for refused overrides.
pub fn resolve(args: &SimulateArgs) -> std::result::Result<Result<RunManifest>, String> {
    let outputs = Outputs { csv: args.out.join(REPORT_CSV), json: args.out.join(REPORT_JSON) };
    if let Some(path) = &args.manifest {
        if !args.overrides.is_empty() {
            return Err("parameter overrides cannot be combined with --manifest".into());
        }
        return Ok(read_manifest(path).map(|mut m| {
            m.outputs = outputs;
            m.version = env!("CARGO_PKG_VERSION").to_string();
            m
        }));
    }
    let name = args.preset.as_deref().expect("clap requires --preset without --manifest");
    let preset = Preset::parse(name).expect("clap restricts preset names");
    if !args.overrides.is_empty() && !args.force {
        return Err(format!("preset `{name}` has fixed parameters; pass --force to override them"));
    }
    let seed = args.seed.unwrap_or(DEFAULT_SEED);
    let mut specs = preset.specs(seed);
    for spec in &mut specs {
        args.overrides.apply(spec);
    }
    Ok(Ok(RunManifest {
        tool: "nof1".into(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        study: preset.name().into(),
        preset: Some(preset.name().into()),
        overrides: args.overrides.clone(),
        m: args.m.unwrap_or(DEFAULT_M) as usize,
        seed,
        specs,
        outputs,
    }))
}

fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
    if manifest.m == 0 {
        bail!("manifest {} has m = 0", path.display());
    }
    Ok(manifest)
}

pub fn run(manifest: &RunManifest, out: &Path, jobs: Option<u64>) -> Result<StudyReport> {
    for spec in &manifest.specs {
        spec.validate().context("invalid simulation setting")?;
    }
    let jobs = jobs.map(|j| j as usize).unwrap_or_else(default_jobs);
    let report = run_study(&manifest.study, &manifest.specs, manifest.m, jobs)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(&manifest.outputs.csv, &report.to_csv())?;
    write(&manifest.outputs.json, &report.to_json())?;
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    write(&out.join(MANIFEST_JSON), &text)?;
    Ok(report)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn print_summary(report: &StudyReport) {
    println!("{:<14} {:<12} {:>10} {:>8} {:>9} {:>9}", "scheme", "method", "stop mean", "stop sd", "stopped", "coverage");
    for s in report.summaries() {
        let cov = s.coverage.map(|c| format!("{c:.3}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<14} {:<12} {:>10.2} {:>8.2} {:>9.3} {:>9}",
            s.scheme.name(),
            s.label,
            s.stopping_mean,
            s.stopping_sd,
            s.stopped_fraction,
            cov
        );
    }
}
