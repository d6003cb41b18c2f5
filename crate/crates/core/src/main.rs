use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eicp::harness::{
    initialization_for, run_experiment, to_json, ExperimentConfig, RegistrationSummary,
};
use eicp::io::{load_cloud, save_cloud, write_text, CloudFormat};
use eicp::perturb::{random_cloud, Rng};
use eicp::shapes::BundledShape;
use eicp::{register_with, GroupKind, IcpParams, Result};

#[derive(Parser)]
#[command(
    name = "eicp",
    version,
    about = "Rigid registration with ellipsoid initialization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a source cloud onto a target cloud.
    Register(RegisterArgs),
    /// Write a uniform random cloud.
    Synth(SynthArgs),
    /// Run a seeded experiment from a config file.
    #[command(alias = "sweep")]
    Experiment(ExperimentArgs),
    /// Export one of the bundled clouds.
    Bundled(BundledArgs),
}

#[derive(Args)]
struct RegisterArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long, default_value = "ref")]
    group: GroupKind,
    /// Start ICP from the identity instead of the ellipsoid alignment.
    #[arg(long)]
    no_init: bool,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    allow_reflections: bool,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Output JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 20.0)]
    half_width: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BundledArgs {
    name: BundledShape,
    #[arg(long)]
    out: PathBuf,
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn register(args: RegisterArgs) -> Result<()> {
    let source = load_cloud(&args.source, None)?;
    let target = load_cloud(&args.target, None)?;
    let mut params = IcpParams {
        allow_reflections: args.allow_reflections,
        ..IcpParams::default()
    };
    if let Some(m) = args.max_iterations {
        params.max_iterations = m;
    }
    let result = register_with(
        &source,
        &target,
        &initialization_for(args.group, args.no_init),
        &params,
    )?;
    if let Some(e) = &result.e_init {
        for w in &e.warnings {
            log::warn!("{w}");
        }
    }
    write_output(
        args.out.as_deref(),
        &to_json(&RegistrationSummary::from(&result))?,
    )
}

fn synth(args: SynthArgs) -> Result<()> {
    let cloud = random_cloud(
        args.n,
        args.d,
        args.half_width,
        &mut Rng::from_seed(args.seed),
    )?;
    save_cloud(&args.out, &cloud, None)
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    for path in run_experiment(&config, &args.out_dir)? {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn bundled(args: BundledArgs) -> Result<()> {
    let format = CloudFormat::from_path(&args.out).unwrap_or(BundledShape::file_format());
    save_cloud(&args.out, &args.name.load()?, Some(format))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Register(a) => register(a),
        Command::Synth(a) => synth(a),
        Command::Experiment(a) => experiment(a),
        Command::Bundled(a) => bundled(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
