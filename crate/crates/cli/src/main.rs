use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use paradox::commands;
use paradox::config::{Overrides, RunConfig};

/// Persona-aware code-mixed text generation.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean, tag, gate, filter and split a raw corpus.
    Prepare(Overrides),
    /// Learn the BPE vocabulary on the training split.
    Tokenize(Overrides),
    /// Train a model with early stopping.
    Train(Overrides),
    /// Generate from validation seed words or a request file.
    Generate(Overrides),
    /// Score generations against validation references.
    Evaluate(Overrides),
    /// Train and score the full model and four ablations.
    Ablate(Overrides),
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(o) => {
            let s = commands::prepare(&RunConfig::load(&o)?)?;
            println!("{}", serde_json::to_string(&s.stats)?);
        }
        Command::Tokenize(o) => {
            let t = commands::tokenize(&RunConfig::load(&o)?)?;
            println!("vocabulary {} tokens, {} merges", t.vocab.len(), t.merges.len());
        }
        Command::Train(o) => {
            let s = commands::train_reporting(&RunConfig::load(&o)?, &mut |l| eprintln!("{l}"))?;
            println!(
                "{} epochs, best epoch {} (validation loss {:.4})",
                s.epochs_done, s.best_epoch, s.best_val_loss
            );
        }
        Command::Generate(o) => {
            let n = commands::generate(&RunConfig::load(&o)?)?;
            println!("{n} generations");
        }
        Command::Evaluate(o) => {
            let m = commands::evaluate(&RunConfig::load(&o)?)?;
            let cols = commands::MetricsFile::COLUMNS;
            for (c, v) in cols.iter().zip(m.values()) {
                println!("{c}: {v:.4}");
            }
        }
        Command::Ablate(o) => {
            let rows = commands::ablate_reporting(&RunConfig::load(&o)?, &mut |l| eprintln!("{l}"))?;
            print!("{}", commands::ablation_markdown(&rows));
        }
    }
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
