//! `scftwin`: run scenarios, verify ledgers, serve the API, print reports.
//!
//! Exit codes: 0 success, 1 other failure (I/O, bind), 2 invalid input (scenario,
//! configuration, missing data directory), 3 invariant violation during a run,
//! 4 corrupt ledger.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use scftwin_core::config::{ConfigError, Overrides, ServiceConfig};
use scftwin_core::platform::{Platform, PlatformError};
use scftwin_core::simulator::{drive, generate, ScenarioConfig, SimError};
use scftwin_core::store::{read_log, StoreError, SPEC_FILE};

#[derive(Parser)]
#[command(name = "scftwin", version, about = "Supply-chain financial twin")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drive a scenario through a platform and write the run report.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Persist to this directory; a directory already holding the scenario's
        /// platform is resumed.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Check every block of a persisted ledger.
    VerifyLedger {
        #[arg(long)]
        data: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the run report of a persisted platform.
    Report {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl ToString) -> Self {
        Self { code, message: message.to_string() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new(2, e)
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let code = match e {
            StoreError::CorruptLog { .. } => 4,
            StoreError::MissingDir(_) | StoreError::NotInitialized(_) | StoreError::BadSpec(_) => 2,
            StoreError::AlreadyInitialized(_) | StoreError::Io(_) => 1,
        };
        Failure::new(code, e)
    }
}

impl From<PlatformError> for Failure {
    fn from(e: PlatformError) -> Self {
        match e {
            PlatformError::Store(s) => s.into(),
            PlatformError::Invariant { .. } | PlatformError::Submit(_) | PlatformError::Consensus(_) => {
                Failure::new(3, e)
            }
            PlatformError::UnknownMember(_) => Failure::new(2, e),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) => Failure::new(2, e),
            SimError::Platform { tick, source } => {
                let inner = Failure::from(source);
                Failure::new(inner.code, format!("tick {tick}: {}", inner.message))
            }
        }
    }
}

fn write(out: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(out, text).map_err(|e| Failure::new(1, format!("cannot write {}: {e}", out.display())))
}

fn run(scenario: &Path, seed: Option<u64>, out: &Path, data: Option<&Path>) -> Result<(), Failure> {
    let mut cfg = ScenarioConfig::load(scenario)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let mut spec = cfg.platform_spec();
    Overrides::from_env()?.apply(&mut spec)?;
    let script = generate(&cfg)?;
    let mut platform = match data {
        None => Platform::new(spec),
        Some(dir) if dir.join(SPEC_FILE).exists() => {
            let p = Platform::open(dir)?;
            if *p.spec() != spec {
                return Err(Failure::new(2, format!("{} holds a different platform", dir.display())));
            }
            p
        }
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Failure::new(1, e))?;
            Platform::create(dir, spec)?
        }
    };
    let stats = drive(&script, &cfg.policy, &mut platform)?;
    write(out, &platform.run_report().to_json_pretty())?;
    eprintln!(
        "{} ticks, {} blocks, {} transactions, {} deals; report in {}",
        stats.ticks,
        stats.blocks,
        stats.submitted,
        stats.deals,
        out.display()
    );
    Ok(())
}

fn verify(data: &Path) -> Result<(), Failure> {
    match read_log(data) {
        Ok(log) => {
            let tip = log.blocks.last().map(|b| b.block_hash.to_string());
            println!("{}", json!({ "status": "ok", "height": log.blocks.len(), "tip_hash": tip }));
            Ok(())
        }
        Err(StoreError::CorruptLog { seq, reason }) => {
            println!("{}", json!({ "status": "corrupt", "height": seq, "reason": reason }));
            Err(Failure::new(4, format!("ledger corrupt at height {seq}: {reason}")))
        }
        Err(e) => Err(e.into()),
    }
}

fn report(data: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let platform = Platform::open(data)?;
    let text = platform.run_report().to_json_pretty();
    match out {
        Some(path) => write(path, &text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn serve(config: &Path) -> Result<(), Failure> {
    let mut cfg = ServiceConfig::load(config)?;
    cfg.apply(&Overrides::from_env()?)?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::new(1, e))?;
    rt.block_on(scftwin_service::serve(cfg)).map_err(|e| match e {
        scftwin_service::ServeError::Platform(p) => Failure::from(p),
        scftwin_service::ServeError::UnknownPrincipal(_) => Failure::new(2, e),
        other => Failure::new(1, other),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, seed, out, data } => run(scenario, *seed, out, data.as_deref()),
        Command::VerifyLedger { data } => verify(data),
        Command::Serve { config } => serve(config),
        Command::Report { data, out } => report(data, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
