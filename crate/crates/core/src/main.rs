use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use horcrux::canonical;
use horcrux::harness::{
    compute_error_rates, run_enrollment, run_scenario, verify_ledger_file, AdversaryKind, HarnessError,
    SimulationConfig, Transcript, EXIT_CONFIG,
};
use horcrux::protocol::AuthMode;

/// Biometric authentication over DIDs: simulation and tooling.
#[derive(Debug, Parser)]
#[command(name = "horcrux", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Remote,
    Local,
}

impl From<Mode> for AuthMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Remote => AuthMode::Remote,
            Mode::Local => AuthMode::Local,
        }
    }
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Flat `key = value` simulation config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the transcript here instead of stdout.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Enroll one user and print the transcript.
    Enroll {
        #[command(flatten)]
        common: Common,
    },
    /// Enroll, then authenticate once.
    Auth {
        #[arg(long, value_enum)]
        mode: Mode,
        /// none, replay, tamper-hub, mitm-observe or share-spoof.
        #[arg(long)]
        adversary: Option<String>,
        /// Require the challenge-bound possession proof in local mode.
        #[arg(long)]
        mitigation: bool,
        /// Authenticate with an unrelated template.
        #[arg(long)]
        impostor: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Run an attack scenario.
    Attack {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        mitigation: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo false-reject and false-accept rates.
    Rates {
        #[arg(long)]
        trials: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check the hash chain of an exported ledger.
    VerifyLedger { file: PathBuf },
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<SimulationConfig, HarnessError> {
    let mut cfg = match path {
        Some(p) => SimulationConfig::load(p)?,
        None => SimulationConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn emit(t: &Transcript, out: Option<&Path>) -> Result<i32, HarnessError> {
    match out {
        Some(p) => {
            fs::write(p, t.to_lines())?;
            println!("{}", t.summary_line());
        }
        None => t.write_to(io::stdout().lock())?,
    }
    Ok(t.verdict().exit_code())
}

fn run(cmd: Command) -> Result<i32, HarnessError> {
    match cmd {
        Command::Enroll { common } => {
            let cfg = load_config(common.config.as_deref(), common.seed)?;
            emit(&run_enrollment(&cfg)?, common.transcript.as_deref())
        }
        Command::Auth { mode, adversary, mitigation, impostor, common } => {
            let mut cfg = load_config(common.config.as_deref(), common.seed)?;
            cfg.mode = mode.into();
            if let Some(a) = adversary {
                cfg.adversary = a.parse()?;
            }
            cfg.mitigation |= mitigation;
            cfg.impostor |= impostor;
            emit(&run_scenario(&cfg)?, common.transcript.as_deref())
        }
        Command::Attack { kind, mitigation, common } => {
            let mut cfg = load_config(common.config.as_deref(), common.seed)?;
            cfg.adversary = kind.parse()?;
            if cfg.adversary == AdversaryKind::None {
                return Err(HarnessError::Config("attack needs an adversary kind".into()));
            }
            if cfg.adversary == AdversaryKind::ShareSpoof {
                cfg.mode = AuthMode::Local;
            }
            cfg.mitigation |= mitigation;
            emit(&run_scenario(&cfg)?, common.transcript.as_deref())
        }
        Command::Rates { trials, config, seed } => {
            let cfg = load_config(config.as_deref(), seed)?;
            let rates = compute_error_rates(&cfg, trials)?;
            println!("{}", canonical::to_canonical_string(&rates));
            Ok(0)
        }
        Command::VerifyLedger { file } => {
            let valid = verify_ledger_file(&file)?;
            println!("{}", if valid { "valid" } else { "invalid" });
            Ok(if valid { 0 } else { 3 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let code = run(cli.command).unwrap_or_else(|e| {
        let _ = writeln!(io::stderr(), "horcrux: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
