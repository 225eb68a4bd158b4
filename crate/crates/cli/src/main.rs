mod commands;
mod exit;
mod runlog;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dermaprep_core::config::PipelineConfig;

#[derive(Parser, Debug)]
#[command(name = "dermaprep", version, about = "Dermoscopic dataset preparation pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Pipeline configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every randomized step; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker thread cap; falls back to DERMAPREP_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Detect and inpaint hair and ruler occlusions.
    Purify {
        manifest: PathBuf,
        /// Also write each occlusion mask beside its image as `<id>.occ.png`.
        #[arg(long)]
        emit_mask: bool,
    },
    /// Fill holes in every PNG mask of a directory.
    MaskPost {
        mask_dir: PathBuf,
    },
    /// Architecture description checks.
    Arch {
        #[command(subcommand)]
        action: ArchAction,
    },
    /// Screen generated images against the training set by MSE.
    Dedup {
        generated: PathBuf,
        training: PathBuf,
    },
    /// Plan and materialize the class-balancing augmentation.
    Augment {
        #[command(flatten)]
        inputs: PlanInputs,
    },
    /// Print the augmentation plan without writing images.
    Plan {
        #[command(flatten)]
        inputs: PlanInputs,
    },
    /// Evaluate a predictions CSV.
    Eval {
        predictions: PathBuf,
        /// Expected class list, comma separated.
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<String>>,
    },
    /// Export the normalized seven-channel network input.
    Stack {
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum ArchAction {
    /// Trace shapes and check weight sharing.
    Verify {
        spec: PathBuf,
        /// Count parameters without bias terms.
        #[arg(long)]
        no_bias: bool,
    },
}

#[derive(Args, Debug)]
struct PlanInputs {
    /// Manifests holding original and purified rows.
    #[arg(required = true)]
    manifests: Vec<PathBuf>,
    /// Manifest of generated images.
    #[arg(long)]
    generated: Option<PathBuf>,
}

fn load_config(g: &Global) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn init_threads(g: &Global) -> anyhow::Result<()> {
    let threads = match g.threads {
        Some(n) => Some(n),
        None => match std::env::var("DERMAPREP_THREADS") {
            Ok(v) => Some(v.trim().parse().map_err(|_| {
                exit::ConfigIssue(format!("DERMAPREP_THREADS must be a positive integer, got `{v}`"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(exit::ConfigIssue("thread cap must be at least 1".into()).into());
        }
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<commands::Status> {
    init_threads(&cli.global)?;
    let cfg = load_config(&cli.global)?;
    let ctx = commands::Ctx {
        cfg,
        out: cli.global.out.clone(),
        quiet: cli.global.quiet,
    };
    match cli.command {
        Command::Purify { manifest, emit_mask } => commands::purify::run(&ctx, &manifest, emit_mask),
        Command::MaskPost { mask_dir } => commands::masks::run(&ctx, &mask_dir),
        Command::Arch {
            action: ArchAction::Verify { spec, no_bias },
        } => commands::arch::verify(&ctx, &spec, !no_bias),
        Command::Dedup {
            generated,
            training,
        } => commands::dedup::run(&ctx, &generated, &training),
        Command::Augment { inputs } => {
            commands::augment::run(&ctx, &inputs.manifests, inputs.generated.as_deref(), true)
        }
        Command::Plan { inputs } => {
            commands::augment::run(&ctx, &inputs.manifests, inputs.generated.as_deref(), false)
        }
        Command::Eval {
            predictions,
            classes,
        } => commands::eval::run(&ctx, &predictions, classes.as_deref()),
        Command::Stack { images } => commands::stack::run(&ctx, &images),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(commands::Status::Clean) => ExitCode::SUCCESS,
        Ok(commands::Status::Findings) => ExitCode::from(exit::FINDING),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code_for(&e))
        }
    }
}
