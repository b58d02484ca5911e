use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use nof1_core::simulation::{run_trial, Preset};
use serde::Deserialize;

use crate::svg::{Chart, Layer, PALETTE};

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["from", "single_run"]))]
pub struct FiguresArgs {
    /// Plot the curves of a simulation report.
    #[arg(long)]
    pub from: Option<PathBuf>,
    /// Plot the confidence sequences of one simulated trial.
    #[arg(long)]
    pub single_run: bool,
    #[arg(long, value_parser = ["fig1", "table2"], requires = "single_run", default_value = "table2")]
    pub preset: String,
    #[arg(long, requires = "single_run", default_value_t = 7)]
    pub seed: u64,
    /// Replication index of the plotted trial.
    #[arg(long, requires = "single_run", default_value_t = 0)]
    pub trial: u64,
    /// Nominal level drawn as a reference line.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Output directory; defaults to the report's directory, or `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct Row {
    scheme: String,
    method: String,
    block: usize,
    cumulative_rejection: f64,
    uniform_coverage: Option<f64>,
}

struct Curve {
    scheme: String,
    method: String,
    blocks: Vec<f64>,
    rejection: Vec<f64>,
    coverage: Vec<Option<f64>>,
}

pub fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' }).collect()
}

fn read_curves(path: &Path) -> Result<Vec<Curve>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut curves: Vec<Curve> = Vec::new();
    for row in reader.deserialize() {
        let row: Row = row.with_context(|| format!("parsing {}", path.display()))?;
        let same = curves.last().is_some_and(|c| c.scheme == row.scheme && c.method == row.method);
        if !same {
            curves.push(Curve {
                scheme: row.scheme.clone(),
                method: row.method.clone(),
                blocks: Vec::new(),
                rejection: Vec::new(),
                coverage: Vec::new(),
            });
        }
        let c = curves.last_mut().expect("pushed above");
        c.blocks.push(row.block as f64);
        c.rejection.push(row.cumulative_rejection);
        c.coverage.push(row.uniform_coverage);
    }
    if curves.is_empty() {
        bail!("{} has no rows", path.display());
    }
    Ok(curves)
}

fn curve_chart(c: &Curve, alpha: f64) -> Chart {
    let mut layers = vec![Layer::Line {
        label: "cumulative rejection".into(),
        color: PALETTE[0].into(),
        dashed: false,
        points: c.blocks.iter().zip(&c.rejection).map(|(x, y)| (*x, Some(*y))).collect(),
    }];
    if c.coverage.iter().any(Option::is_some) {
        layers.push(Layer::Line {
            label: "uniform coverage".into(),
            color: PALETTE[2].into(),
            dashed: false,
            points: c.blocks.iter().zip(&c.coverage).map(|(x, y)| (*x, *y)).collect(),
        });
    }
    let (first, last) = (c.blocks[0], *c.blocks.last().expect("non-empty curve"));
    layers.push(Layer::Line {
        label: format!("alpha = {alpha}"),
        color: PALETTE[1].into(),
        dashed: true,
        points: vec![(first, Some(alpha)), (last, Some(alpha))],
    });
    Chart {
        title: format!("{} ({})", c.method, c.scheme),
        x_label: "block".into(),
        y_label: "fraction of trials".into(),
        y_range: Some((0.0, 1.0)),
        layers,
    }
}

/// Overlay of the cumulative rejection curves of every method.
fn overview_chart(curves: &[Curve], alpha: f64) -> Chart {
    let mut layers: Vec<Layer> = curves
        .iter()
        .enumerate()
        .map(|(i, c)| Layer::Line {
            label: format!("{} ({})", c.method, c.scheme),
            color: PALETTE[i % PALETTE.len()].into(),
            dashed: false,
            points: c.blocks.iter().zip(&c.rejection).map(|(x, y)| (*x, Some(*y))).collect(),
        })
        .collect();
    let last = curves.iter().flat_map(|c| c.blocks.last().copied()).fold(1.0, f64::max);
    layers.push(Layer::Line {
        label: format!("alpha = {alpha}"),
        color: "#000000".into(),
        dashed: true,
        points: vec![(1.0, Some(alpha)), (last, Some(alpha))],
    });
    Chart {
        title: "Cumulative rejection by block".into(),
        x_label: "block".into(),
        y_label: "fraction of trials".into(),
        y_range: Some((0.0, 1.0)),
        layers,
    }
}

fn save(dir: &Path, name: &str, chart: &Chart, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, chart.render()).with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    Ok(())
}

pub fn from_report(csv_path: &Path, out: &Path, alpha: f64) -> Result<Vec<PathBuf>> {
    let curves = read_curves(csv_path)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut written = Vec::new();
    save(out, "rejection_overview.svg", &overview_chart(&curves, alpha), &mut written)?;
    for c in &curves {
        save(out, &format!("{}_{}.svg", c.scheme, slug(&c.method)), &curve_chart(c, alpha), &mut written)?;
    }
    Ok(written)
}

/// Interval bands, estimates and the true effect for one trial of each
/// preset setting.
pub fn single_run(preset: Preset, seed: u64, trial: u64, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut written = Vec::new();
    for spec in preset.specs(seed) {
        let trace = run_trial(&spec, trial)?;
        let blocks: Vec<f64> = (1..=spec.config.num_blocks).map(|k| k as f64).collect();
        for m in trace.methods.iter().filter(|m| m.method.has_intervals()) {
            let layers = vec![
                Layer::Band {
                    label: format!("{:.0}% confidence sequence", 100.0 * (1.0 - spec.config.alpha)),
                    color: PALETTE[0].into(),
                    points: blocks.iter().zip(&m.intervals).map(|(x, iv)| (*x, iv.map(|i| (i.lower, i.upper)))).collect(),
                },
                Layer::Line {
                    label: "estimate".into(),
                    color: PALETTE[0].into(),
                    dashed: false,
                    points: blocks.iter().zip(&m.intervals).map(|(x, iv)| (*x, iv.map(|i| i.center))).collect(),
                },
                Layer::Line {
                    label: "true effect".into(),
                    color: PALETTE[2].into(),
                    dashed: false,
                    points: blocks.iter().zip(&trace.truth).map(|(x, y)| (*x, Some(*y))).collect(),
                },
                Layer::Line {
                    label: "zero".into(),
                    color: PALETTE[1].into(),
                    dashed: true,
                    points: vec![(1.0, Some(0.0)), (*blocks.last().expect("K >= 1"), Some(0.0))],
                },
            ];
            let stop = m.stopping_block.map(|k| format!(", stops at block {k}")).unwrap_or_default();
            let chart = Chart {
                title: format!("{} ({}){stop}", m.method.label(), spec.config.scheme),
                x_label: "block".into(),
                y_label: "average treatment effect".into(),
                y_range: band_range(&m.intervals, &trace.truth),
                layers,
            };
            let name = format!("cs_{}_{}.svg", spec.config.scheme, slug(m.method.label()));
            save(out, &name, &chart, &mut written)?;
        }
    }
    Ok(written)
}

/// Y range clipped so that the wide early intervals do not flatten the plot.
fn band_range(intervals: &[Option<nof1_core::CsInterval>], truth: &[f64]) -> Option<(f64, f64)> {
    let skip = intervals.len() / 10;
    let mut lo = 0f64;
    let mut hi = 0f64;
    for iv in intervals.iter().skip(skip).flatten() {
        lo = lo.min(iv.lower);
        hi = hi.max(iv.upper);
    }
    for t in truth {
        lo = lo.min(*t);
        hi = hi.max(*t);
    }
    let pad = 0.05 * (hi - lo).max(1.0);
    Some((lo - pad, hi + pad))
}

pub fn run(args: &FiguresArgs) -> Result<Vec<PathBuf>> {
    if let Some(csv) = &args.from {
        if !csv.is_file() {
            bail!("report {} does not exist", csv.display());
        }
        let out = args.out.clone().unwrap_or_else(|| csv.parent().map(Path::to_path_buf).unwrap_or_default());
        return from_report(csv, &out, args.alpha);
    }
    let preset = Preset::parse(&args.preset).expect("clap restricts preset names");
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    single_run(preset, args.seed, args.trial, &out)
}

