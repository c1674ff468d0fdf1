use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vot::cli;
use vot::config::RunConfig;
use vot::Result;

#[derive(Parser)]
#[command(name = "vot", about = "Transformer visual odometry on a synthetic navigation world")]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// Flat `section.key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set train.epochs=30` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on evaluation worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Parent directory for run directories.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Collect training and validation datasets.
    Collect,
    /// Train a model on collected datasets.
    Train,
    /// Closed-loop navigation under modality subsets.
    Eval,
    /// Export last-layer attention maps for dataset samples.
    Attn,
    /// Preview generated floorplans.
    Worldgen,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Collect => "collect",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Attn => "attn",
            Command::Worldgen => "worldgen",
        }
    }
}

fn resolve(args: &Args) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &args.set {
        cfg.apply_override(kv)?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    if let Some(o) = &args.out {
        cfg.out = o.display().to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &Args) -> Result<()> {
    let cfg = resolve(args)?;
    let dir = cli::run_dir(&cfg, args.command.name())?;
    println!("run directory: {}", dir.display());
    match args.command {
        Command::Collect => cli::cmd_collect(&cfg, &dir),
        Command::Train => cli::cmd_train(&cfg, &dir),
        Command::Eval => cli::cmd_eval(&cfg, &dir).map(drop),
        Command::Attn => cli::cmd_attn(&cfg, &dir).map(drop),
        Command::Worldgen => cli::cmd_worldgen(&cfg, &dir),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
