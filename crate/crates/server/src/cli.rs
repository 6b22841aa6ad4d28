//! Command-line entry points.

use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use tokio::net::TcpListener;

use availd_core::clock::SystemClock;
use availd_core::config::ServiceConfig;
use availd_core::report::{self, year_to_date};
use availd_core::scenario;
use availd_core::service::Service;
use availd_core::store;
use availd_core::time::{TimeInterval, Timestamp};

use crate::api;
use crate::state::AppState;

#[derive(Debug, Parser)]
#[command(name = "availd", version, about = "Availability SLA management service")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP API and the dashboard refresh job.
    Serve {
        #[arg(long, env = "AVAILD_CONFIG")]
        config: PathBuf,
        #[arg(long, env = "AVAILD_DATA_DIR")]
        data_dir: PathBuf,
        #[arg(long, env = "AVAILD_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Print the executive report for a period.
    Report {
        #[arg(long, env = "AVAILD_CONFIG")]
        config: PathBuf,
        #[arg(long, env = "AVAILD_DATA_DIR")]
        data_dir: PathBuf,
        #[arg(long)]
        from: Option<Timestamp>,
        #[arg(long)]
        to: Option<Timestamp>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Expand a probe scenario into alert firings. With `--config` the
    /// firings are ingested and their outcomes printed.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Persist ingested events here; in memory when omitted.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Write the event log as NDJSON.
    Export {
        #[arg(long, env = "AVAILD_DATA_DIR")]
        data_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        from_seq: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Append-only merge of an NDJSON export into the log.
    Import {
        file: PathBuf,
        #[arg(long, env = "AVAILD_DATA_DIR")]
        data_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

fn load_config(path: &Path) -> anyhow::Result<ServiceConfig> {
    ServiceConfig::load_file(path).with_context(|| format!("loading {}", path.display()))
}

fn open_service(config: ServiceConfig, dir: &Path) -> anyhow::Result<Service> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let (service, load) = Service::open_dir(config, dir).with_context(|| format!("opening {}", dir.display()))?;
    if load.truncated_tail {
        tracing::warn!(events = load.events, "dropped a partial final line from the event log");
    }
    Ok(service)
}

fn period(from: Option<Timestamp>, to: Option<Timestamp>) -> anyhow::Result<TimeInterval> {
    match (from, to) {
        (None, None) => Ok(year_to_date(chrono::Utc::now())),
        (Some(f), Some(t)) => Ok(TimeInterval::new(f, t)?),
        _ => bail!("give both --from and --to, or neither"),
    }
}

pub async fn serve(config: ServiceConfig, data_dir: &Path, addr: SocketAddr) -> anyhow::Result<()> {
    let refresh = Duration::from_secs(config.refresh_interval_seconds);
    let service = open_service(config, data_dir)?;
    let listener = TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    let state = AppState::new(service, Arc::new(SystemClock), None);
    let timer = tokio::spawn(state.clone().run_refresh(refresh));
    tracing::info!(addr = %listener.local_addr()?, refresh_secs = refresh.as_secs(), "availd listening");
    axum::serve(listener, api::router(state.clone()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await?;
    timer.abort();
    state.persist_snapshot();
    Ok(())
}

pub async fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Serve { config, data_dir, port, host } => {
            let config = load_config(&config)?;
            let addr: SocketAddr = format!("{host}:{port}").parse().with_context(|| format!("bad address {host}:{port}"))?;
            serve(config, &data_dir, addr).await
        }
        Command::Report { config, data_dir, from, to, format } => {
            let service = open_service(load_config(&config)?, &data_dir)?;
            let report = service.executive_report(&period(from, to)?);
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
                Format::Text => print!("{}", report::render_text(&report)),
            }
            Ok(())
        }
        Command::Simulate { scenario: path, config, data_dir } => {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let events = scenario::run_probe_scenario(&text).with_context(|| format!("parsing {}", path.display()))?;
            let mut out = std::io::stdout().lock();
            let Some(config) = config else {
                for e in &events {
                    writeln!(out, "{}", serde_json::to_string(e)?)?;
                }
                return Ok(());
            };
            let config = load_config(&config)?;
            let mut service = match &data_dir {
                Some(dir) => open_service(config, dir)?,
                None => Service::in_memory(config),
            };
            for e in events {
                let fired_at = e.fired_at;
                let line = match service.ingest_alert(e.clone(), fired_at) {
                    Ok(outcome) => serde_json::json!({ "event": e, "outcome": outcome }),
                    Err(err) => serde_json::json!({ "event": e, "error": err.to_string() }),
                };
                writeln!(out, "{line}")?;
            }
            writeln!(out, "{}", serde_json::json!({ "counters": service.ledger().alerts.counters }))?;
            if data_dir.is_some() {
                service.write_snapshot()?;
            }
            Ok(())
        }
        Command::Export { data_dir, from_seq, out } => {
            let service = open_service(ServiceConfig::default(), &data_dir)?;
            let text = store::to_ndjson(&service.export(from_seq)?);
            match out {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => std::io::stdout().lock().write_all(text.as_bytes())?,
            }
            Ok(())
        }
        Command::Import { file, data_dir } => {
            let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let events = store::parse_ndjson(&text)?;
            let mut service = open_service(ServiceConfig::default(), &data_dir)?;
            let summary = service.import(events)?;
            service.write_snapshot()?;
            println!("{}", serde_json::to_string(&summary)?);
            Ok(())
        }
    }
}
