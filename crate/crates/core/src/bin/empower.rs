use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use empower::config::parse_config_from_env;
use empower::{cmd_convergence, cmd_landscape, cmd_lyapunov, cmd_rollout, Error, RunConfig};

/// Empowerment landscapes and greedy empowerment control.
///
/// Config keys can be overridden with EMPOWER__<SECTION>__<KEY>=<value>.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true, env = "EMPOWER_CONFIG")]
    config: Option<PathBuf>,

    /// Output directory, overriding `[output] dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Random seed, overriding `[control] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for grid evaluation (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    /// Also render SVG plots.
    #[arg(long, global = true)]
    svg: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Empowerment over a 2-D slice of state space.
    Landscape,
    /// Closed-loop greedy empowerment rollout.
    Rollout,
    /// Empowerment at a fixed horizon under step refinement.
    Convergence,
    /// Controlled Lyapunov exponents at a state.
    Lyapunov,
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, Error> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)?,
        None => String::new(),
    };
    let mut cfg: RunConfig = parse_config_from_env(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.svg {
        cfg.output.svg = true;
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    match cli.command {
        Command::Landscape => cmd_landscape(&cfg, &out, cli.workers),
        Command::Rollout => cmd_rollout(&cfg, &out),
        Command::Convergence => cmd_convergence(&cfg, &out, cli.workers),
        Command::Lyapunov => cmd_lyapunov(&cfg, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let mut record = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            if let Error::Config(p) = &e {
                record["key"] = p.key.clone().into();
                record["line"] = p.line.into();
            }
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
