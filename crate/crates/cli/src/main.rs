use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use loewner_cli::{parse_config, run_pipeline, scenarios, Command, RunOptions, ScenarioConfig};

#[derive(Parser)]
#[command(name = "loewner", version, about = "Loewner chains, evolution families and quasiconformal extensions")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate the evolution family and check its axioms.
    Evolve(RunArgs),
    /// Build range-normalized and decreasing chains and verify the chain PDE.
    Chain(RunArgs),
    /// Estimate β(0) and classify the Loewner range.
    Range(RunArgs),
    /// Build the welded extension atlas and estimate its Beltrami coefficient.
    Extend(RunArgs),
    /// Becker's radial extension (τ ≡ 0).
    Becker(RunArgs),
    /// Herglotz, holomorphy, Becker and pair inequalities.
    Check(RunArgs),
    /// Step-function approximation experiments.
    Approx(RunArgs),
    /// List built-in scenarios, or print one as a config file.
    Scenarios {
        name: Option<String>,
        #[arg(long)]
        k: Option<f64>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config file (JSON).
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    config: Option<PathBuf>,
    /// Built-in scenario name instead of a config file.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides time.tol.
    #[arg(long)]
    tol: Option<f64>,
    /// Overrides criteria.k (and parametrizes becker-k / sector-k).
    #[arg(long)]
    k: Option<f64>,
    /// Zero all wall-clock fields so repeated runs are byte-identical.
    #[arg(long)]
    deterministic: bool,
}

fn load(args: &RunArgs) -> Result<ScenarioConfig, String> {
    let mut cfg = match (&args.config, &args.scenario) {
        (Some(path), _) => parse_config(path).map_err(|e| e.to_string())?,
        (None, Some(name)) => {
            scenarios::builtin(name, args.k).ok_or_else(|| format!("unknown scenario `{name}`; known: {}", scenarios::NAMES.join(", ")))?
        }
        (None, None) => unreachable!("clap requires --config or --scenario"),
    };
    if let Some(t) = args.tol {
        cfg.time.tol = t;
    }
    if let Some(k) = args.k {
        cfg.criteria.k = Some(k);
    }
    let errors = loewner_cli::config::validate(&cfg);
    if !errors.is_empty() {
        return Err(loewner_cli::ConfigErrors(errors).to_string());
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Scenarios { name: None, .. } => {
            for n in scenarios::NAMES {
                println!("{n}");
            }
            return ExitCode::SUCCESS;
        }
        Cmd::Scenarios { name: Some(name), k } => {
            return match scenarios::builtin(&name, k) {
                Some(cfg) => {
                    println!("{}", cfg.to_json());
                    ExitCode::SUCCESS
                }
                None => {
                    eprintln!("unknown scenario `{name}`");
                    ExitCode::from(2)
                }
            };
        }
        Cmd::Evolve(a) => (Command::Evolve, a),
        Cmd::Chain(a) => (Command::Chain, a),
        Cmd::Range(a) => (Command::Range, a),
        Cmd::Extend(a) => (Command::Extend, a),
        Cmd::Becker(a) => (Command::Becker, a),
        Cmd::Check(a) => (Command::Check, a),
        Cmd::Approx(a) => (Command::Approx, a),
    };
    let cfg = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(2);
        }
    };
    match run_pipeline(&cfg, command, &args.out, RunOptions { deterministic: args.deterministic }) {
        Ok(s) => {
            println!("{} {}: {}", s.scenario, s.command, if s.pass { "pass" } else { "FAIL" });
            for w in &s.warnings {
                println!("  warning: {w}");
            }
            if let Some(e) = &s.error {
                println!("  error: {e}");
            }
            if s.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
