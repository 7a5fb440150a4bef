// SPDX-License-Identifier: Apache-2.0

//! Command-line surface. Every command writes JSON lines to `out` and
//! returns its exit code; errors map to codes through [`CliError::exit_code`].

use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use sfamss::crypto::{BackendKind, Role};
use sfamss::protocol::{run_session, Clock, Direct, ManualClock, Outcome, SessionParams, SystemClock};
use sfamss::share::MERSENNE_61;
use sfamss::store::{BankStore, ChainStatus};

use crate::deployment::{hex, mix, Deployment, InitOptions, DEFAULT_LIMIT};
use crate::error::{exit, CliError};
use crate::report::{ScenarioReport, StepReport};
use crate::scenario::{self, RunDefaults};
use crate::serve::{self, TcpLink};

#[derive(Debug, Parser)]
#[command(name = "sfamss", version, about = "Secret-sharing ATM authentication: deployment, bank daemon, ATM client and attack harness")]
pub struct Cli {
    /// Deployment directory.
    #[arg(long, env = "SFAMSS_DIR", global = true, default_value = ".")]
    pub dir: PathBuf,
    /// Seed for reproducible runs; selects the deterministic Ed25519/X25519 backend.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Fixed clock in milliseconds since the Unix epoch (test mode).
    #[arg(long, global = true)]
    pub clock: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BackendArg {
    Rsa,
    Curve25519,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RoleArg {
    Atm,
    User,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a deployment: CA, bank keys, base polynomial and an empty store.
    Init {
        #[arg(long, value_enum, default_value = "rsa")]
        backend: BackendArg,
        /// Field prime.
        #[arg(long, default_value_t = MERSENNE_61)]
        modulus: u64,
        /// Freshness window in milliseconds.
        #[arg(long, default_value_t = 30_000)]
        window: u64,
        /// Port the bank daemon listens on by default.
        #[arg(long, default_value_t = sfamss::codec::transport::DEFAULT_PORT)]
        port: u16,
    },
    /// Register an ATM or a user and write its state file.
    Register {
        #[arg(value_enum)]
        role: RoleArg,
        #[arg(long)]
        pin: Option<String>,
        /// Withdrawal limit for a user.
        #[arg(long, default_value_t = DEFAULT_LIMIT)]
        limit: u64,
    },
    /// Run the bank daemon until SIGINT or SIGTERM.
    Serve {
        /// Overrides the configured port; 0 picks a free one.
        #[arg(long)]
        port: Option<u16>,
    },
    /// Run one ATM session against the bank daemon.
    Atm {
        /// ATM id or state file.
        #[arg(long)]
        atm: String,
        /// User id or card file.
        #[arg(long)]
        card: String,
        #[arg(long)]
        pin: String,
        /// Request a withdrawal of this amount after authentication.
        #[arg(long)]
        amount: Option<u64>,
        /// Bank address; defaults to the configured one.
        #[arg(long)]
        bank: Option<String>,
    },
    /// Run a bundled attack in-process: replay, tamper, impersonate, eavesdrop or stale.
    Attack { kind: String },
    /// Run a scenario file, or a bundled scenario by name.
    Scenario { file: String },
    /// Check the audit hash chain of the bank store.
    AuditVerify {
        /// Print every record.
        #[arg(long)]
        show: bool,
    },
}

const ATTACKS: [&str; 5] = ["replay", "tamper", "impersonate", "eavesdrop", "stale"];

fn emit(out: &mut dyn Write, value: serde_json::Value) -> Result<(), CliError> {
    writeln!(out, "{value}")?;
    out.flush()?;
    Ok(())
}

fn clock(fixed: Option<u64>) -> Arc<dyn Clock> {
    match fixed {
        Some(ms) => Arc::new(ManualClock::new(ms)),
        None => Arc::new(SystemClock),
    }
}

fn report_exit(report: &ScenarioReport, out: &mut dyn Write) -> Result<i32, CliError> {
    report.write_jsonl(out)?;
    Ok(if report.passed() { exit::EXPECTED } else { exit::REJECTED })
}

/// Runs a parsed command line.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    let dir = cli.dir;
    match cli.command {
        Command::Init {
            backend,
            modulus,
            window,
            port,
        } => {
            let opts = InitOptions {
                backend: match backend {
                    BackendArg::Rsa => BackendKind::Rsa2048,
                    BackendArg::Curve25519 => BackendKind::Curve25519,
                },
                modulus,
                window_ms: window,
                port,
                seed: cli.seed,
            };
            let dep = Deployment::init(&dir, opts)?;
            let store = BankStore::inspect(&dep.store_path(), dep.storage_key()?)?;
            let bank_id = store
                .secrets()?
                .assigned
                .iter()
                .find(|(_, role)| **role == Role::Bank)
                .map(|(id, _)| *id)
                .expect("init assigns the bank id");
            emit(
                out,
                json!({
                    "event": "initialized",
                    "dir": dir.display().to_string(),
                    "bank_id": bank_id.0,
                    "backend": dep.settings.backend.name(),
                    "modulus": dep.settings.modulus,
                    "address": dep.settings.address,
                    "checksum": dep.settings.checksum(),
                }),
            )?;
            Ok(exit::EXPECTED)
        }
        Command::Register { role, pin, limit } => {
            let dep = Deployment::load(&dir)?;
            let policy = dep.policy(clock(cli.clock))?;
            let (role, id, path) = match role {
                RoleArg::Atm => {
                    let (atm, path) = dep.register_atm(policy)?;
                    ("atm", atm.atm_id, path)
                }
                RoleArg::User => {
                    let pin = pin.filter(|p| !p.is_empty()).ok_or(CliError::PinRequired)?;
                    let (card, path) = dep.register_user(policy, &pin, limit)?;
                    ("user", card.user_id, path)
                }
            };
            emit(
                out,
                json!({"event": "registered", "role": role, "id": id.0, "file": path.display().to_string()}),
            )?;
            Ok(exit::EXPECTED)
        }
        Command::Serve { port } => {
            let dep = Deployment::load(&dir)?;
            let address = match port {
                Some(p) => format!("127.0.0.1:{p}"),
                None => dep.settings.address.clone(),
            };
            let listener = serve::bind(&address)?;
            let stop = Arc::new(AtomicBool::new(false));
            for sig in [signal_hook::consts::SIGINT, signal_hook::consts::SIGTERM] {
                signal_hook::flag::register(sig, stop.clone())?;
            }
            let policy = dep.policy(clock(cli.clock))?;
            let salt = mix(policy.now(), 0xba2c);
            let bank = dep.bank(dep.backend(salt)?, policy, salt)?;
            serve::serve(Arc::new(bank), listener, stop, out)?;
            Ok(exit::EXPECTED)
        }
        Command::Atm {
            atm,
            card,
            pin,
            amount,
            bank,
        } => {
            let dep = Deployment::load(&dir)?;
            let atm = dep.load_atm(&atm)?;
            let mut card = dep.load_card(&card)?;
            let policy = dep.policy(clock(cli.clock))?;
            let salt = mix(atm.atm_id.0, mix(card.user_id.0, policy.now()));
            let backend = dep.backend(salt)?;
            let address = bank.unwrap_or_else(|| dep.settings.address.clone());
            let params = SessionParams {
                backend: &*backend,
                policy: &policy,
                pin: &pin,
                amount,
            };
            let outcome = run_session(&params, &mut card, &atm, &mut Direct, &mut TcpLink::new(&address));
            if let Outcome::Connectivity(reason) = &outcome.outcome {
                return Err(CliError::ConnectionFailed {
                    addr: address,
                    reason: reason.clone(),
                });
            }
            let mut report = ScenarioReport::new("atm");
            let mut step = StepReport::session("atm", 1, &outcome);
            step.ok = outcome.outcome.is_accept() && outcome.authorized != Some(false);
            report.steps.push(step);
            report_exit(&report, out)
        }
        Command::Attack { kind } => {
            if !ATTACKS.contains(&kind.as_str()) {
                return Err(CliError::UnknownAttack(kind));
            }
            let dep = Deployment::load(&dir)?;
            let text = scenario::bundled(&kind).expect("every attack is bundled");
            let parsed = scenario::parse(&kind, text)?;
            let mut defaults = RunDefaults::from_settings(&dep.settings, cli.clock);
            if let Some(seed) = cli.seed {
                defaults.seed = seed;
            }
            report_exit(&scenario::run(&parsed, &defaults)?, out)
        }
        Command::Scenario { file } => {
            let (label, text) = match std::fs::read_to_string(&file) {
                Ok(text) => (file.clone(), text),
                Err(e) => match scenario::bundled(&file) {
                    Some(text) => (file.clone(), text.to_string()),
                    None => return Err(CliError::Usage(format!("cannot read {file}: {e}"))),
                },
            };
            let parsed = scenario::parse(&label, &text)?;
            let mut defaults = match Deployment::load(&dir) {
                Ok(dep) => RunDefaults::from_settings(&dep.settings, cli.clock),
                Err(_) => RunDefaults::default(),
            };
            if let Some(ms) = cli.clock {
                defaults.clock_ms = ms;
            }
            if let Some(seed) = cli.seed {
                defaults.seed = seed;
                defaults.backend = BackendKind::Curve25519;
            }
            report_exit(&scenario::run(&parsed, &defaults)?, out)
        }
        Command::AuditVerify { show } => {
            let dep = Deployment::load(&dir)?;
            let store = BankStore::inspect(&dep.store_path(), dep.storage_key()?)?;
            if show {
                for r in store.read_audit()? {
                    emit(
                        out,
                        json!({
                            "seq": r.seq,
                            "timestamp": r.timestamp,
                            "event": r.body.event.name(),
                            "user_id": r.body.user_id.map(|i| i.0),
                            "atm_id": r.body.atm_id.map(|i| i.0),
                            "t_s": r.body.t_s,
                            "amount": r.body.amount,
                            "evidence": hex(&r.body.evidence),
                        }),
                    )?;
                }
            }
            let (ok, broken_at) = match store.verify_audit_chain() {
                ChainStatus::Ok => (true, None),
                ChainStatus::BrokenAt(seq) => (false, Some(seq)),
            };
            emit(
                out,
                json!({"event": "audit-verify", "records": store.audit_len(), "ok": ok, "broken_at": broken_at}),
            )?;
            Ok(if ok { exit::EXPECTED } else { exit::REJECTED })
        }
    }
}
