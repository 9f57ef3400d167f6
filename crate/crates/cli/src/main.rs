use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ris_chanest::experiment::Profile;
use ris_chanest_cli::{cmd_eval, cmd_generate, cmd_sweep, cmd_train, exit_code, parse_values, CliConfig, Overrides};

#[derive(Parser)]
#[command(name = "ris-chanest", version, about = "Cascaded RIS channel estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Args)]
struct Common {
    /// TOML file merged over the profile defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    profile: Option<ProfileArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output location; defaults to the matching entry under `[paths]`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Compute gradients on a single thread.
    #[arg(long)]
    serial: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset and its manifest.
    Generate(Common),
    /// Train on a generated dataset; writes a checkpoint and run record.
    Train(Common),
    /// Evaluate a checkpoint on its dataset's validation and test splits.
    Eval {
        /// Checkpoint file written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory; defaults to the one in the checkpoint's config.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// One trained run per value of a swept parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of r_a, r_t, snr, epoch.
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. `1/2,1/4` or `0,10,20`.
        #[arg(long)]
        values: String,
    },
    /// Print the resolved config as TOML.
    Config(Common),
}

fn resolve(c: &Common) -> ris_chanest::Result<CliConfig> {
    let mut cfg = CliConfig::resolve(&Overrides {
        config: c.config.clone(),
        profile: c.profile.map(|p| match p {
            ProfileArg::Desk => Profile::Desk,
            ProfileArg::Paper => Profile::Paper,
        }),
        seed: c.seed,
    })?;
    if c.serial {
        cfg.experiment.train.parallel = false;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> ris_chanest::Result<()> {
    match cli.command {
        Command::Generate(c) => {
            let cfg = resolve(&c)?;
            let s = cmd_generate(&cfg, c.out.as_deref())?;
            println!("wrote {} samples ({} bytes) to {}", s.samples, s.bytes, s.dir.display());
        }
        Command::Train(c) => {
            let cfg = resolve(&c)?;
            let a = cmd_train(&cfg, c.out.as_deref())?;
            for e in &a.record.epochs {
                println!(
                    "epoch {:>4}  lr {:.2e}  loss_t {:.4e}  loss_a {:.4e}  val_nmse {:.4e}",
                    e.epoch, e.learning_rate, e.loss_t, e.loss_a, e.validation_nmse
                );
            }
            println!(
                "best epoch {}  test nmse {:.4e}  ({:.1}s)",
                a.record.best_epoch, a.record.final_test_nmse, a.record.wall_time_secs
            );
            println!("checkpoint {}\nrun record {}", a.checkpoint.display(), a.run.display());
        }
        Command::Eval { checkpoint, dataset } => {
            let r = cmd_eval(&checkpoint, dataset.as_deref())?;
            println!("validation nmse {:.6e}\ntest nmse {:.6e}", r.validation_nmse, r.test_nmse);
        }
        Command::Sweep { common, axis, values } => {
            let cfg = resolve(&common)?;
            let values = parse_values(&values)?;
            let a = cmd_sweep(&cfg, &axis, &values, common.out.as_deref())?;
            for r in &a.report.runs {
                println!("{} = {}  final test nmse {:.4e}", a.report.axis, r.value, r.record.final_test_nmse);
            }
            println!("report {}\nruns {}", a.csv.display(), a.runs.display());
        }
        Command::Config(c) => print!("{}", resolve(&c)?.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
