//! Drives a trial step by step, either on a local data directory or
//! against a running server.

use std::fmt;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use nof1_core::trial::TrialConfig;
use nof1_service::http::ErrorBody;
use nof1_service::{EstimateSnapshot, OutcomeAck, TrialService, TrialStatus};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

#[derive(Debug, Args)]
pub struct TrialArgs {
    /// Event log directory for embedded mode.
    #[arg(long, global = true, default_value = "data", conflicts_with = "server")]
    pub data_dir: PathBuf,
    /// Base URL of a running server, e.g. http://127.0.0.1:8080.
    #[arg(long, global = true)]
    pub server: Option<String>,
    /// Print raw JSON responses.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: TrialCommand,
}

#[derive(Debug, Subcommand)]
pub enum TrialCommand {
    /// Create a trial from a JSON configuration file.
    New {
        #[arg(long)]
        config: PathBuf,
    },
    /// Assign the next block.
    Assign {
        #[arg(long)]
        id: String,
    },
    /// Record one outcome.
    Record {
        #[arg(long)]
        id: String,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        t: usize,
        #[arg(long, allow_hyphen_values = true)]
        y: f64,
        /// Covariates as a JSON value.
        #[arg(long)]
        covariates: Option<String>,
    },
    /// Close a complete block and print the updated estimates.
    Close {
        #[arg(long)]
        id: String,
        #[arg(long)]
        k: usize,
    },
    Status {
        #[arg(long)]
        id: String,
    },
    /// List trial ids.
    List,
}

/// A structured error from the service, local or remote.
#[derive(Debug)]
pub struct ApiError(pub ErrorBody);

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.0.code, self.0.message)
    }
}

impl std::error::Error for ApiError {}

impl From<nof1_service::ServiceError> for ApiError {
    fn from(e: nof1_service::ServiceError) -> Self {
        ApiError(ErrorBody { code: e.code().into(), message: e.to_string(), field: e.field().map(str::to_string) })
    }
}

enum Backend {
    Local(TrialService),
    Remote { client: reqwest::blocking::Client, base: String },
}

impl Backend {
    fn post(&self, path: &str, body: Option<Value>) -> Result<Value> {
        let Backend::Remote { client, base } = self else { unreachable!("remote only") };
        let mut req = client.post(format!("{base}{path}"));
        if let Some(b) = body {
            req = req.json(&b);
        }
        remote(req.send())
    }

    fn get(&self, path: &str) -> Result<Value> {
        let Backend::Remote { client, base } = self else { unreachable!("remote only") };
        remote(client.get(format!("{base}{path}")).send())
    }
}

fn remote(resp: reqwest::Result<reqwest::blocking::Response>) -> Result<Value> {
    let resp = resp.context("contacting server")?;
    let ok = resp.status().is_success();
    let status = resp.status();
    let body: Value = resp.json().with_context(|| format!("server answered {status} without JSON"))?;
    if ok {
        return Ok(body);
    }
    let err: ErrorBody = serde_json::from_value(body)
        .unwrap_or_else(|_| ErrorBody { code: "http_error".into(), message: status.to_string(), field: None });
    Err(ApiError(err).into())
}

fn local<T: serde::Serialize>(r: nof1_service::Result<T>) -> Result<Value> {
    let v = r.map_err(ApiError::from)?;
    Ok(serde_json::to_value(v)?)
}

fn typed<T: DeserializeOwned>(v: &Value) -> Result<T> {
    serde_json::from_value(v.clone()).context("unexpected response shape")
}

pub fn run(args: &TrialArgs) -> Result<()> {
    let backend = match &args.server {
        Some(url) => Backend::Remote {
            client: reqwest::blocking::Client::new(),
            base: url.trim_end_matches('/').to_string(),
        },
        None => Backend::Local(TrialService::open(&args.data_dir).map_err(ApiError::from)?),
    };
    let value = execute(&backend, &args.command)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&value)?);
    } else {
        print_human(&args.command, &value)?;
    }
    Ok(())
}

fn execute(backend: &Backend, cmd: &TrialCommand) -> Result<Value> {
    match cmd {
        TrialCommand::New { config } => {
            let text = std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
            let raw: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
            match backend {
                Backend::Local(svc) => {
                    let cfg = TrialConfig::from_json(raw).map_err(|e| ApiError::from(nof1_service::ServiceError::from(e)))?;
                    let id = svc.create_trial(cfg).map_err(ApiError::from)?;
                    Ok(json!({ "trial_id": id }))
                }
                Backend::Remote { .. } => backend.post("/trials", Some(raw)),
            }
        }
        TrialCommand::Assign { id } => match backend {
            Backend::Local(svc) => local(svc.assign_next_block(id)),
            Backend::Remote { .. } => backend.post(&format!("/trials/{id}/blocks"), None),
        },
        TrialCommand::Record { id, k, t, y, covariates } => {
            let cov = covariates
                .as_deref()
                .map(serde_json::from_str::<Value>)
                .transpose()
                .context("--covariates must be valid JSON")?;
            match backend {
                Backend::Local(svc) => local(svc.record_outcome(id, *k, *t, *y, cov)),
                Backend::Remote { .. } => {
                    let mut body = json!({ "t": t, "y": y });
                    if let Some(c) = cov {
                        body["covariates"] = c;
                    }
                    backend.post(&format!("/trials/{id}/blocks/{k}/outcomes"), Some(body))
                }
            }
        }
        TrialCommand::Close { id, k } => match backend {
            Backend::Local(svc) => {
                let snapshots = svc.close_block(id, *k).map_err(ApiError::from)?;
                Ok(json!({ "snapshots": snapshots }))
            }
            Backend::Remote { .. } => backend.post(&format!("/trials/{id}/blocks/{k}/close"), None),
        },
        TrialCommand::Status { id } => match backend {
            Backend::Local(svc) => local(svc.get_status(id)),
            Backend::Remote { .. } => backend.get(&format!("/trials/{id}")),
        },
        TrialCommand::List => match backend {
            Backend::Local(svc) => Ok(json!({ "trials": svc.store().list().map_err(ApiError::from)? })),
            Backend::Remote { .. } => backend.get("/trials"),
        },
    }
}

fn snapshot_line(s: &EstimateSnapshot) -> String {
    let rec = serde_json::to_value(s.recommendation).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
    format!(
        "{:<12} k={:<3} estimate {:>9.4}  interval [{:.4}, {:.4}]  {}",
        s.method.label(),
        s.k,
        s.point,
        s.interval.lower,
        s.interval.upper,
        rec
    )
}

fn print_human(cmd: &TrialCommand, v: &Value) -> Result<()> {
    match cmd {
        TrialCommand::New { .. } => println!("{}", v["trial_id"].as_str().unwrap_or_default()),
        TrialCommand::Assign { .. } => {
            let a: nof1_core::Assignment = typed(v)?;
            let arm = if a.arm.is_treated() { "treatment" } else { "control" };
            let forced = if a.forced { ", forced by pairing" } else { "" };
            println!("block {}: {arm} (propensity {:.4}{forced})", a.k, a.propensity);
        }
        TrialCommand::Record { .. } => {
            let ack: OutcomeAck = typed(v)?;
            println!("recorded outcome ({}, {}); {} left in block", ack.k, ack.t, ack.remaining);
        }
        TrialCommand::Close { .. } => {
            let snapshots: Vec<EstimateSnapshot> = typed(&v["snapshots"])?;
            if snapshots.is_empty() {
                println!("block closed; no estimate available yet");
            }
            for s in &snapshots {
                println!("{}", snapshot_line(s));
            }
        }
        TrialCommand::Status { .. } => {
            let s: TrialStatus = typed(v)?;
            println!("trial {}", s.trial_id);
            println!(
                "design {} K={} T={} alpha={} eta={}",
                s.config.scheme, s.config.num_blocks, s.config.block_len, s.config.alpha, s.config.eta
            );
            println!("closed blocks {}{}", s.closed_blocks, if s.complete { " (complete)" } else { "" });
            if let Some(open) = &s.open_block {
                println!(
                    "open block {}: {} of {} outcomes",
                    open.assignment.k,
                    open.outcomes.len(),
                    s.config.block_len
                );
            }
            let mut latest: Vec<&EstimateSnapshot> = Vec::new();
            for snap in &s.snapshots {
                match latest.iter_mut().find(|x| x.method == snap.method) {
                    Some(slot) => *slot = snap,
                    None => latest.push(snap),
                }
            }
            for snap in latest {
                println!("{}", snapshot_line(snap));
            }
        }
        TrialCommand::List => {
            for id in v["trials"].as_array().into_iter().flatten() {
                println!("{}", id.as_str().unwrap_or_default());
            }
        }
    }
    Ok(())
}
