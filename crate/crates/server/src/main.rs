use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Context;
use calmrelay_server::{Server, ServerConfig};
use clap::Parser;
use tracing_subscriber::EnvFilter;

/// Real-time collective audience-reaction relay.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Address to listen on, e.g. 0.0.0.0:8080.
    #[arg(long)]
    listen: Option<SocketAddr>,
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Log filter, e.g. info or calmrelay_server=debug.
    #[arg(long)]
    log_level: Option<String>,
    /// Directory served at `/` (the browser client).
    #[arg(long)]
    static_dir: Option<PathBuf>,
    /// Record every room's session log into this directory.
    #[arg(long)]
    record_dir: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let mut config = match &args.config {
        Some(path) => ServerConfig::load(path)?,
        None => ServerConfig::default(),
    };
    config.apply_env(std::env::vars())?;
    if let Some(listen) = args.listen {
        config.listen = listen;
    }
    if let Some(level) = args.log_level {
        config.log_level = level;
    }
    if let Some(dir) = args.static_dir {
        config.static_dir = Some(dir);
    }
    if let Some(dir) = args.record_dir {
        config.record_dir = dir;
        config.room.record = true;
    }
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_new(&config.log_level).context("bad --log-level")?)
        .init();

    let server = Server::start(config).await?;
    tokio::select! {
        result = server.wait() => result,
        _ = tokio::signal::ctrl_c() => {
            tracing::info!("shutting down");
            Ok(())
        }
    }
}
