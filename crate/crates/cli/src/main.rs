use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wbc_cli::commands::{self, ExplainTarget};
use wbc_cli::{CliError, Overrides, Preset, RunConfig};
use wbc_core::ensemble::CombinerMode;
use wbc_core::optim::OptimizerKind;

#[derive(Parser)]
#[command(name = "wbc", version, about = "White-blood-cell CNN ensemble pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split, standardize and augment the dataset.
    Prepare(Common),
    /// Train the three members and write the checkpoint and epoch log.
    Train(Common),
    /// Score a checkpoint on a test CSV.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Test CSV; defaults to the prepared test split.
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// LIME explanation of one image.
    Explain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Row of the test CSV to explain.
        #[arg(long, conflicts_with = "image")]
        index: Option<usize>,
        /// PNG image to explain.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long, conflicts_with = "image")]
        test: Option<PathBuf>,
    },
    /// Print the effective config.
    Config(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    #[arg(long, value_enum)]
    combiner: Option<CombinerArg>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Paper,
    Desk,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Rmsprop,
    Adam,
}

#[derive(Clone, Copy, ValueEnum)]
enum CombinerArg {
    Average,
    Weighted,
    MaxConfidence,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let preset = self.preset.map(|p| match p {
            PresetArg::Paper => Preset::Paper,
            PresetArg::Desk => Preset::Desk,
        });
        let mut config = RunConfig::load(self.config.as_deref(), preset)?;
        Overrides {
            seed: self.seed,
            epochs: self.epochs,
            optimizer: self.optimizer.map(|o| match o {
                OptimizerArg::Sgd => OptimizerKind::Sgd,
                OptimizerArg::Rmsprop => OptimizerKind::RmsProp,
                OptimizerArg::Adam => OptimizerKind::Adam,
            }),
            combiner: self.combiner.map(|c| match c {
                CombinerArg::Average => CombinerMode::Average,
                CombinerArg::Weighted => CombinerMode::Weighted,
                CombinerArg::MaxConfidence => CombinerMode::MaxConfidence,
            }),
            out: self.out.clone(),
        }
        .apply(&mut config)?;
        Ok(config)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Prepare(common) => {
            let config = common.resolve()?;
            let r = commands::prepare(&config)?;
            println!(
                "prepared train={} test={} train_augmented={} in {}",
                r.train.len(),
                r.test.len(),
                r.augmented.len(),
                config.output_dir.join("prepare").display()
            );
        }
        Command::Train(common) => {
            let config = common.resolve()?;
            let r = commands::train(&config)?;
            for (run, member) in r.runs.iter().zip(&r.model.members) {
                if let Some(last) = run.epochs.last() {
                    println!(
                        "member {} epochs={} train_acc={:.4} test_acc={:.4}",
                        member.config.id,
                        run.epochs.len(),
                        last.train_accuracy,
                        last.eval_accuracy
                    );
                }
            }
            println!(
                "weights={:?} checkpoint={}",
                r.model.weights,
                config.output_dir.join("train/model.dcen").display()
            );
        }
        Command::Evaluate {
            common,
            checkpoint,
            test,
        } => {
            let config = common.resolve()?;
            let r = commands::evaluate(&config, checkpoint.as_deref(), test.as_deref())?;
            println!("accuracy={:.4} images={}", r.accuracy, r.confusion.total());
        }
        Command::Explain {
            common,
            checkpoint,
            index,
            image,
            test,
        } => {
            let config = common.resolve()?;
            let target = match image {
                Some(path) => ExplainTarget::Png(path),
                None => ExplainTarget::TestIndex {
                    test,
                    index: index.unwrap_or(0),
                },
            };
            let r = commands::explain(&config, checkpoint.as_deref(), &target)?;
            println!(
                "class={} probability={:.4} top_regions={:?} overlay={}",
                wbc_core::data::CLASS_NAMES[r.explanation.target_class],
                r.explanation.probability,
                r.top_regions,
                r.overlay_path.display()
            );
        }
        Command::Config(common) => print!("{}", common.resolve()?.to_text()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let detail = e.to_string().replace('\n', " ");
            eprintln!("error: kind={} detail={detail}", e.kind());
            ExitCode::FAILURE
        }
    }
}
