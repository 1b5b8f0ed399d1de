use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use msg_unet::data::{load_dataset, Dataset};
use msg_unet::harness::{self, gradscan, Checkpoint, RunConfig};
use msg_unet::nets::Resolution;

#[derive(Parser)]
#[command(name = "msgu", about = "Multi-scale gradient U-Net image translation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a config file; writes losses.csv and checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Translate an image or a directory of images.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        /// Degrade the input to this scale (HxW) before translating.
        #[arg(long)]
        degrade: Option<Resolution>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// PSNR, SSIM and VIF of outputs against targets.
    Eval {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        target: PathBuf,
    },
    /// SSIM grid over input degradation levels and output scales.
    Ablate {
        #[arg(long)]
        ckpt: PathBuf,
        /// Dataset root containing `<split>/source` and `<split>/target`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "val")]
        split: String,
    },
    /// Gradient histograms with and without intermediate heads.
    Gradscan {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 20)]
        epochs: u64,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
    },
    /// Per-layer and total FLOPs from the configuration alone.
    Flops {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> msg_unet::Result<()> {
    match cli.command {
        Command::Train { config, resume } => {
            let config = RunConfig::load(&config)?.with_env_overrides()?;
            let summary = harness::train(config, resume.as_deref())?;
            println!("trained {} steps", summary.steps);
            println!("losses: {}", summary.loss_csv.display());
            println!("checkpoint: {}", summary.final_checkpoint.display());
        }
        Command::Infer {
            ckpt,
            input,
            degrade,
            out,
        } => {
            let (_, mut generator) = harness::load_generator(&Checkpoint::load(&ckpt)?)?;
            for path in harness::infer(&mut generator, &input, degrade, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Eval { out, target } => {
            print!("{}", harness::eval(&out, &target)?.to_csv());
        }
        Command::Ablate { ckpt, data, split } => {
            print!("{}", harness::ablate(&ckpt, &data, &split)?.to_csv());
        }
        Command::Gradscan { config, epochs, seeds } => {
            let base = RunConfig::load(&config)?.with_env_overrides()?;
            let dataset = Dataset::load(load_dataset(&base.data.root, &base.data.split)?)?;
            let mut pairs = Vec::new();
            for seed in seeds {
                let mut c = base.clone();
                c.train.seed = seed;
                let pair = gradscan::scan_pair(&c, &dataset, epochs)?;
                println!(
                    "seed {seed}: earliest-group median gain {}, deep near-zero heads-off >= heads-on {}",
                    pair.earliest_median_gain(),
                    pair.deep_near_zero_not_less()
                );
                pairs.push(pair);
            }
            gradscan::write_gradscan(&base.output.dir, &pairs)?;
            println!("histograms: {}", base.output.dir.display());
        }
        Command::Flops { config } => {
            let config = RunConfig::load(&config)?;
            print!("{}", harness::flops(&config.arch)?.to_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
