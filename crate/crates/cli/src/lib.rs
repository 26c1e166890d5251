//! Command-line front end of nepcurate.

pub mod args;
pub mod commands;
pub mod server;

use std::ffi::OsString;

use clap::Parser;
use nepcurate::service::{open_session, SessionOptions};
use nepcurate::{Error, Result, SurrogateModel};

use args::{Cli, Command, ServeArgs};

/// Parses `argv` (legacy single-dash flags included) and runs the verb.
pub fn run<I, T>(argv: I) -> std::result::Result<String, RunError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let cli = Cli::try_parse_from(args::normalize_argv(argv)).map_err(RunError::Usage)?;
    dispatch(cli).map_err(RunError::Failed)
}

#[derive(Debug)]
pub enum RunError {
    Usage(clap::Error),
    Failed(Error),
}

fn dispatch(cli: Cli) -> Result<String> {
    match &cli.command {
        Command::Perturb(a) => commands::perturb(a, cli.seed),
        Command::Select(a) => commands::select(a),
        Command::Nep(a) => commands::nep(a, cli.seed),
        Command::Md(a) => commands::md(a, cli.seed),
        Command::Label(a) => commands::label_cmd(a),
        Command::Init(a) => commands::init(a),
        Command::Train(a) => commands::train(a),
        Command::Serve(a) => serve(a),
    }
}

pub fn open(args: &ServeArgs) -> Result<(nepcurate::service::Session, nepcurate::service::OpenReport)> {
    let model = args.model.as_ref().map(SurrogateModel::load).transpose()?;
    let opts = SessionOptions {
        model,
        radii: commands::radii_table(&args.radii)?,
        ..SessionOptions::default()
    };
    open_session(&args.dir, opts)
}

fn serve(args: &ServeArgs) -> Result<String> {
    let (session, report) = open(args)?;
    let kinds: Vec<String> = report
        .parity
        .iter()
        .map(|(k, s)| format!("{}:{s:?}", k.name()))
        .collect();
    eprintln!(
        "opened {} ({} frames; parity {})",
        report.dataset.display(),
        report.frames,
        if kinds.is_empty() {
            "none".to_string()
        } else {
            kinds.join(", ")
        }
    );
    let addr: std::net::SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| Error::Config(format!("bad address {}:{}: {e}", args.host, args.port)))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Config(e.to_string()))?;
    rt.block_on(server::serve(addr, session))
        .map_err(|e| Error::Config(format!("server: {e}")))?;
    Ok("server stopped".into())
}
