use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use nof1_service::TrialService;

mod figures;
mod simulate;
mod svg;
mod trial_cmd;

/// Sequential N-of-1 trials: simulation studies and a live trial service.
#[derive(Debug, Parser)]
#[command(name = "nof1", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a Monte Carlo study and write report.csv, report.json and manifest.json.
    Simulate(simulate::SimulateArgs),
    /// Render SVG figures from a report or from one simulated trial.
    Figures(figures::FiguresArgs),
    /// Serve the trial HTTP API.
    Serve(ServeArgs),
    /// Create and drive a trial by hand.
    Trial(trial_cmd::TrialArgs),
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
}

fn serve(args: &ServeArgs) -> Result<()> {
    let service = TrialService::open(&args.data_dir)
        .map_err(trial_cmd::ApiError::from)
        .with_context(|| format!("opening data directory {}", args.data_dir.display()))?;
    let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
    runtime.block_on(async {
        let addr: SocketAddr = format!("{}:{}", args.host, args.port)
            .parse()
            .with_context(|| format!("invalid address {}:{}", args.host, args.port))?;
        let listener =
            tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        // A closed stdout must not take the server down.
        let mut out = std::io::stdout();
        let _ = writeln!(out, "listening on http://{}", listener.local_addr()?);
        let _ = writeln!(out, "event logs in {}", args.data_dir.display());
        let _ = out.flush();
        nof1_service::http::serve(listener, service).await.context("server failed")
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            let manifest = match simulate::resolve(&args) {
                Ok(m) => m?,
                Err(usage) => Cli::command().error(ErrorKind::ArgumentConflict, usage).exit(),
            };
            let report = simulate::run(&manifest, &args.out, args.jobs)?;
            simulate::print_summary(&report);
            println!("wrote {} and {}", manifest.outputs.csv.display(), manifest.outputs.json.display());
        }
        Command::Figures(args) => {
            for path in figures::run(&args)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Serve(args) => serve(&args)?,
        Command::Trial(args) => trial_cmd::run(&args)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
