use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use flowvae_cli::artifacts::{StageRecord, Variant};
use flowvae_cli::config::PipelineConfig;
use flowvae_cli::stages::{self, Ctx};
use flowvae_cli::synth::{write_fixture, FixtureSpec};

#[derive(Parser)]
#[command(
    name = "flowvae",
    version,
    about = "Botnet detection over aggregated network flows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for stage artifacts and the manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct Scoring {
    #[command(flatten)]
    common: Common,
    /// Use the model from `transfer-train`.
    #[arg(long)]
    transfer: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Parse connection logs into the flow cache.
    Ingest(Common),
    /// Derive host labels from weird logs or label files.
    Label(Common),
    /// Aggregate flows into windows and fit the normalizer.
    Featurize(Common),
    /// Train on normal sequences of the training split.
    Train(Common),
    /// Train with labeled source captures and a target capture.
    TransferTrain(Common),
    /// Score every capture with a trained model.
    Score(Scoring),
    /// Fit normal and botnet score densities on the training split.
    FitPdf(Scoring),
    /// Classify test captures with the streaming detector.
    Detect(Scoring),
    /// Write report tables and curves for the test split.
    Evaluate(Scoring),
    /// Run every stage in order.
    Pipeline(Common),
    /// Write synthetic Zeek logs and a config that runs on them.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 2.0)]
        train_hours: f64,
        #[arg(long, default_value_t = 1.0)]
        test_hours: f64,
        #[arg(long, default_value_t = 60.0)]
        window: f64,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
    },
}

fn context(c: &Common) -> Result<Ctx> {
    let mut cfg = PipelineConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg = cfg.with_seed(seed);
    }
    Ok(Ctx::new(cfg, &c.out))
}

fn variant(s: &Scoring) -> Variant {
    if s.transfer {
        Variant::Transfer
    } else {
        Variant::Semi
    }
}

fn report(name: &str, rec: &StageRecord) {
    for w in &rec.warnings {
        eprintln!("warning: {name}: {w}");
    }
    eprintln!("{name}: wrote {} artifacts", rec.outputs.len());
}

fn print_table(out: &Path, v: Variant) {
    let path = flowvae_cli::artifacts::Layout::new(out).report_table(v);
    if let Ok(text) = std::fs::read_to_string(path) {
        print!("{text}");
    }
}

fn run(cli: Cli) -> Result<()> {
    let (name, rec) = match &cli.command {
        Command::Ingest(c) => ("ingest", stages::cmd_ingest(&context(c)?)?),
        Command::Label(c) => ("label", stages::cmd_label(&context(c)?)?),
        Command::Featurize(c) => ("featurize", stages::cmd_featurize(&context(c)?)?),
        Command::Train(c) => ("train", stages::cmd_train(&context(c)?)?),
        Command::TransferTrain(c) => ("transfer-train", stages::cmd_transfer_train(&context(c)?)?),
        Command::Score(s) => (
            "score",
            stages::cmd_score(&context(&s.common)?, variant(s))?,
        ),
        Command::FitPdf(s) => (
            "fit-pdf",
            stages::cmd_fit_pdf(&context(&s.common)?, variant(s))?,
        ),
        Command::Detect(s) => (
            "detect",
            stages::cmd_detect(&context(&s.common)?, variant(s))?,
        ),
        Command::Evaluate(s) => {
            let rec = stages::cmd_evaluate(&context(&s.common)?, variant(s))?;
            print_table(&s.common.out, variant(s));
            ("evaluate", rec)
        }
        Command::Pipeline(c) => {
            let ctx = context(c)?;
            for (name, rec) in stages::run_pipeline(&ctx)? {
                report(&name, &rec);
            }
            print_table(&c.out, Variant::Semi);
            if ctx.cfg.transfer.is_some() {
                print_table(&c.out, Variant::Transfer);
            }
            return Ok(());
        }
        Command::Synth {
            out,
            seed,
            train_hours,
            test_hours,
            window,
            epochs,
        } => {
            let spec = FixtureSpec {
                seed: *seed,
                train_hours: *train_hours,
                test_hours: *test_hours,
                window_s: *window,
                epochs: *epochs,
            };
            let path = write_fixture(out, &spec)?;
            eprintln!("synth: wrote {}", path.display());
            return Ok(());
        }
    };
    report(name, &rec);
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
