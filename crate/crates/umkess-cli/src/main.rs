//! Command-line front end: run a scenario file to produce transcript and
//! report artifacts, or verify a transcript against its scenario.
//!
//! Exit codes: 0 — the scenario met its expectation (or the transcript
//! verified); 1 — it ran but the outcome mismatched; 2 — the inputs were
//! unusable (bad JSON, bad prime, inconsistent roster, I/O failure).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use umkess::scenario::{ScenarioError, ScenarioFile};

#[derive(Parser)]
#[command(name = "umkess", version, about = "Group key distribution sessions and their breaks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario and write transcript.json and report.json.
    Run {
        /// Scenario description (JSON).
        scenario: PathBuf,
        /// Directory receiving the artifacts.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Replace the scenario file's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Replay a transcript against a scenario and check every record.
    Verify {
        /// Transcript produced by a previous run (JSON).
        transcript: PathBuf,
        /// The scenario it claims to record.
        scenario: PathBuf,
        /// Must match the seed the transcript was produced with.
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Outcome-level failure (exit 1) vs unusable-input failure (exit 2).
enum Failure {
    Outcome(String),
    Unusable(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Schema(m) => Failure::Unusable(m),
            ScenarioError::Mismatch(m) => Failure::Outcome(format!("transcript mismatch: {m}")),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::Unusable(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents)
        .map_err(|e| Failure::Unusable(format!("cannot write {}: {e}", path.display())))
}

fn dispatch(cli: Cli) -> Result<String, Failure> {
    match cli.command {
        Command::Run { scenario, out, seed } => {
            let file = ScenarioFile::from_json(&read(&scenario)?)?;
            let outcome = file.execute(seed)?;
            fs::create_dir_all(&out).map_err(|e| {
                Failure::Unusable(format!("cannot create {}: {e}", out.display()))
            })?;
            write(&out.join("transcript.json"), &outcome.transcript_json)?;
            write(&out.join("report.json"), &outcome.report_json)?;
            if outcome.expectation_met {
                Ok(outcome.summary)
            } else {
                Err(Failure::Outcome(outcome.summary))
            }
        }
        Command::Verify { transcript, scenario, seed } => {
            let file = ScenarioFile::from_json(&read(&scenario)?)?;
            let transcript_json = read(&transcript)?;
            Ok(file.verify(&transcript_json, seed)?)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(Failure::Outcome(msg)) => {
            println!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Unusable(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
