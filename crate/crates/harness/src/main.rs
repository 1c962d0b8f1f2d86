use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;
use std::path::PathBuf;
use std::process::ExitCode;
use wksp_core::security::{compile_schema, generate_keypair, workspace_rules, MembershipModel, TrustRule};
use wksp_core::Name;
use wksp_harness::bench::{run_bench, BenchParams, BenchRow};
use wksp_harness::verify::verify_store;
use wksp_harness::{RunError, RunOptions, Scenario};

#[derive(Parser)]
#[command(name = "wksp", version, about = "Simulated secure collaborative workspaces")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and print its report as JSON.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the event log here.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Persist every peer's packets under this directory.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Re-validate every packet in a persisted store.
    VerifyStore { dir: PathBuf },
    /// Generate an Ed25519 key pair.
    Keygen {
        /// 32-byte hex seed for a reproducible key.
        #[arg(long)]
        seed: Option<String>,
    },
    /// Check whether `signer` may sign `name` under a rule set.
    SchemaCheck { rules: PathBuf, name: String, signer: String },
    /// Latency sweep over link delays, as CSV.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [25u64, 50, 95])]
        delays: Vec<u64>,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, default_value_t = 500)]
        coalesce_ms: u64,
        #[arg(long, default_value_t = 30_000)]
        duration_ms: u64,
    },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RulesFile {
    Explicit(Vec<RuleSpec>),
    Workspace {
        workspace: String,
        root_cert: String,
        #[serde(default = "default_model")]
        model: MembershipModel,
        initiator: String,
    },
}

#[derive(Deserialize)]
struct RuleSpec {
    id: u32,
    data: String,
    signer: String,
}

fn default_model() -> MembershipModel {
    MembershipModel::PeerToPeer
}

fn load_rules(path: &PathBuf) -> Result<Vec<TrustRule>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: RulesFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(match file {
        RulesFile::Explicit(v) => v
            .into_iter()
            .map(|r| TrustRule::parse(r.id, &r.data, &r.signer))
            .collect::<Result<_, _>>()?,
        RulesFile::Workspace { workspace, root_cert, model, initiator } => {
            workspace_rules(&Name::parse(&workspace)?, &Name::parse(&root_cert)?, model, &initiator)?
        }
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Run { scenario, seed, log, store } => {
            let s = match Scenario::load(&scenario) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return Ok(ExitCode::from(2));
                }
            };
            let opts = RunOptions { seed, log_path: log, store_dir: store };
            let report = match wksp_harness::run_scenario(s, &opts) {
                Ok((r, _)) => r,
                Err(RunError::Scenario(e)) => {
                    eprintln!("error: {e}");
                    return Ok(ExitCode::from(2));
                }
                Err(e) => return Err(e.into()),
            };
            println!("{}", serde_json::to_string_pretty(&report)?);
            for a in &report.assertions {
                eprintln!("{} {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.check, a.detail);
            }
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Cmd::VerifyStore { dir } => {
            let r = verify_store(&dir)?;
            for b in &r.bad {
                println!("BAD {b}");
            }
            println!("{} stores, {} packets checked, {} bad", r.stores, r.checked, r.bad.len());
            Ok(if r.ok() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Cmd::Keygen { seed } => {
            let seed = match seed {
                Some(h) => {
                    let b = hex::decode(h).context("seed must be hex")?;
                    Some(<[u8; 32]>::try_from(b.as_slice()).map_err(|_| anyhow::anyhow!("seed must be 32 bytes"))?)
                }
                None => None,
            };
            let k = generate_keypair(seed);
            let out = serde_json::json!({
                "algorithm": "ed25519",
                "keyid": k.keyid(),
                "public": hex::encode(k.public_key().as_bytes()),
                "private": hex::encode(k.private_key()),
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::SchemaCheck { rules, name, signer } => {
            let schema = compile_schema(load_rules(&rules)?)?;
            match schema.check(&Name::parse(&name)?, &Name::parse(&signer)?) {
                Ok(id) => {
                    println!("allowed by rule {id}");
                    Ok(ExitCode::SUCCESS)
                }
                Err(v) => {
                    println!("denied: {v}");
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Cmd::Bench { delays, seeds, coalesce_ms, duration_ms } => {
            let p = BenchParams {
                delays_ms: delays,
                seeds: (1..=seeds).collect(),
                coalesce_ms,
                duration_ms,
                ..BenchParams::default()
            };
            println!("{}", BenchRow::CSV_HEADER);
            for row in run_bench(&p)? {
                println!("{}", row.csv());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
