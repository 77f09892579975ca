use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use truecase::checkpoint::Checkpoint;
use truecase::corpus::{encode, read_corpus};
use truecase::error::Error;
use truecase::eval::{evaluate_model, truecase as truecase_line, UnigramTable};
use truecase::model::{gradient_check, Head};
use truecase::train::{train, TrainConfig};

/// Restore character case in lowercased text with a character-level
/// CNN + BiLSTM + CRF tagger.
#[derive(Parser)]
#[command(name = "truecase", version, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a cased corpus (one example per line)
    Train {
        /// Training corpus: UTF-8 plain text, cased, one example per line
        #[arg(long, value_name = "PATH")]
        train: PathBuf,
        /// Development corpus for early stopping
        #[arg(long, value_name = "PATH")]
        dev: PathBuf,
        /// Where to write the trained checkpoint
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Maximum number of epochs
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        /// Minibatch size
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        /// Adam learning rate
        #[arg(long, default_value_t = 0.002)]
        lr: f64,
        /// Seed controlling init, shuffling, and dropout
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Feed embeddings straight into the BiLSTM (ablation)
        #[arg(long)]
        no_cnn: bool,
        /// Classify each character independently with a softmax instead of
        /// decoding jointly with the CRF (ablation)
        #[arg(long)]
        no_crf: bool,
        /// Clip gradients to this global norm (off unless set)
        #[arg(long, value_name = "NORM")]
        clip: Option<f64>,
        /// Stop after this many epochs without dev-F1 improvement
        #[arg(long, default_value_t = 3)]
        patience: usize,
    },
    /// Score a trained model on a held-out cased corpus
    Eval {
        /// Checkpoint written by `train`
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// Cased test corpus; input is lowercased, the original casing is
        /// the reference
        #[arg(long, value_name = "PATH")]
        test: PathBuf,
    },
    /// Truecase text line by line (stdin by default)
    Apply {
        /// Checkpoint written by `train`
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// Read from this file instead of stdin
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
    },
    /// Check analytic gradients against central finite differences on a
    /// small fixture; exits 0 iff the max relative error is at most 1e-4
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Train and score the most-frequent-casing word baseline
    Baseline {
        /// Cased training corpus for the word table
        #[arg(long, value_name = "PATH")]
        train: PathBuf,
        /// Cased test corpus
        #[arg(long, value_name = "PATH")]
        test: PathBuf,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("TRUECASE_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("TRUECASE_THREADS must be a positive integer, got {threads:?}");
                return ExitCode::from(1);
            }
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version land here with a zero exit code
            let code: u8 = if e.exit_code() == 0 { 0 } else { 1 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> truecase::Result<()> {
    match command {
        Command::Train {
            train: train_path,
            dev,
            out,
            epochs,
            batch_size,
            lr,
            seed,
            no_cnn,
            no_crf,
            clip,
            patience,
        } => {
            let cfg = TrainConfig {
                lr,
                batch_size,
                max_epochs: epochs,
                patience,
                seed,
                head: if no_crf { Head::Softmax } else { Head::Crf },
                use_cnn: !no_cnn,
                clip,
                ..TrainConfig::default()
            };
            let outcome = train(&train_path, &dev, &cfg)?;
            outcome.checkpoint.save(&out)?;
            let best = outcome.checkpoint.epoch as usize;
            eprintln!(
                "saved {} (best epoch {best}, dev f1 {:.2}%)",
                out.display(),
                outcome.checkpoint.best_f1 * 100.0
            );
            if let Some(stats) = outcome.history.iter().find(|s| s.epoch == best) {
                println!("{}", stats.dev.record());
            }
            Ok(())
        }
        Command::Eval { model, test } => {
            let ckpt = Checkpoint::load(&model)?;
            let seqs: Vec<_> = read_corpus(&test)?
                .into_iter()
                .map(|s| encode(s, &ckpt.vocab))
                .collect();
            let report = evaluate_model(&ckpt.params, &seqs)?;
            println!("{}", report.table());
            println!("{}", report.record());
            Ok(())
        }
        Command::Apply { model, input } => {
            let ckpt = Checkpoint::load(&model)?;
            let reader: Box<dyn BufRead> = match &input {
                Some(path) => Box::new(BufReader::new(
                    File::open(path).map_err(|e| Error::io(path, e))?,
                )),
                None => Box::new(BufReader::new(io::stdin())),
            };
            apply_stream(&ckpt, reader, &mut BufWriter::new(io::stdout().lock()))
        }
        Command::Gradcheck { seed } => {
            let (report, names) = gradient_check(seed)?;
            println!(
                "max relative error {:.3e} over {} coordinates (worst: {}[{}], analytic {:.6e}, numeric {:.6e})",
                report.max_rel_err,
                report.coords_checked,
                names[report.worst.0],
                report.worst.1,
                report.worst_analytic,
                report.worst_numeric
            );
            if report.max_rel_err <= 1e-4 {
                Ok(())
            } else {
                Err(Error::GradCheckFailed {
                    max_rel_err: report.max_rel_err,
                })
            }
        }
        Command::Baseline {
            train: train_path,
            test,
        } => {
            let table = UnigramTable::train(&train_path)?;
            let seqs = read_corpus(&test)?;
            let report = table.evaluate(&seqs)?;
            println!("{}", report.table());
            println!("{}", report.record());
            Ok(())
        }
    }
}

/// Streams lines through the model: output line i corresponds to input
/// line i, and memory stays bounded by the chunk, not the file size.
fn apply_stream(
    ckpt: &Checkpoint,
    reader: Box<dyn BufRead>,
    out: &mut impl Write,
) -> truecase::Result<()> {
    const CHUNK_LINES: usize = 256;
    let mut lines = reader.lines();
    loop {
        let mut chunk = Vec::with_capacity(CHUNK_LINES);
        for line in lines.by_ref().take(CHUNK_LINES) {
            chunk.push(line.map_err(|e| Error::io("<input>", e))?);
        }
        if chunk.is_empty() {
            return out.flush().map_err(|e| Error::io("<stdout>", e));
        }
        let cased: truecase::Result<Vec<String>> = chunk
            .par_iter()
            .map(|line| truecase_line(&ckpt.params, &ckpt.vocab, line))
            .collect();
        for line in cased? {
            writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))?;
        }
    }
}
