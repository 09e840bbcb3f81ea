use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use relnet::experiment::{self, CliError, Overrides, ResultsStore};
use relnet::train::Defaults;

#[derive(Parser)]
#[command(
    name = "relnet",
    version,
    about = "Relational memory network for bAbI question answering"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse task files and write encoded caches.
    Prepare {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, default_value = "1-20")]
        tasks: String,
        #[arg(long, default_value = "runs/data")]
        out_dir: PathBuf,
    },
    /// Train seeded runs per task and keep the best checkpoint.
    Train {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, default_value = "1-20")]
        tasks: String,
        #[arg(long, default_value = "runs")]
        out_dir: PathBuf,
        /// Number of seeds per task.
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        slots: Option<usize>,
        /// Disable early stopping at 0% validation error.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        normalize_relations: bool,
        /// Keep only the first N training questions.
        #[arg(long)]
        train_limit: Option<usize>,
        /// Choose the learning rate from the configured grid first.
        #[arg(long)]
        lr_grid: bool,
    },
    /// Report % error of a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Task id, if the checkpoint does not record one.
        #[arg(long)]
        task: Option<u8>,
        /// Results store to append to.
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Print the per-task error table.
    Table {
        #[arg(long, default_value = "runs/results.jsonl")]
        results: PathBuf,
        #[arg(long, default_value = "1-20")]
        tasks: String,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Export gates and attention for one example.
    Trace {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        task: Option<u8>,
        #[arg(long, default_value = "trace.json")]
        out: PathBuf,
        #[arg(long)]
        dot: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let defaults = Defaults::shipped();
    match cli.command {
        Command::Prepare {
            data_dir,
            tasks,
            out_dir,
        } => {
            let tasks = experiment::parse_tasks(&tasks)?;
            for p in experiment::cmd_prepare(&data_dir, &tasks, &out_dir)? {
                println!(
                    "task {} vocab {} train {} valid {} test {} -> {}",
                    p.task,
                    p.vocab_size,
                    p.train,
                    p.valid,
                    p.test,
                    p.cache.display()
                );
            }
        }
        Command::Train {
            data_dir,
            tasks,
            out_dir,
            seeds,
            lr,
            epochs,
            batch,
            dim,
            slots,
            strict,
            normalize_relations,
            train_limit,
            lr_grid,
        } => {
            let tasks = experiment::parse_tasks(&tasks)?;
            let overrides = Overrides {
                seeds,
                learning_rate: lr,
                epochs,
                batch_size: batch,
                dim,
                slots,
                normalize_relations,
                strict,
                train_limit,
                lr_grid,
            };
            for s in experiment::cmd_train(&data_dir, &tasks, &out_dir, &overrides, &defaults)? {
                let best = s.selected.map(|i| &s.records[i]);
                match best {
                    Some(r) => println!(
                        "task {} seed {} valid {} test {}",
                        s.task,
                        r.seed,
                        r.valid_err
                            .map(experiment::format_error)
                            .unwrap_or_default(),
                        r.test_err.map(experiment::format_error).unwrap_or_default()
                    ),
                    None => println!("task {} failed", s.task),
                }
            }
        }
        Command::Eval {
            checkpoint,
            data_dir,
            split,
            task,
            results,
        } => {
            let store = results.map(ResultsStore::new);
            let report = experiment::cmd_eval(
                &checkpoint,
                &data_dir,
                &split,
                task,
                store.as_ref(),
                &defaults,
            )?;
            println!("{}", report.line());
        }
        Command::Table {
            results,
            tasks,
            format,
        } => {
            let tasks = experiment::parse_tasks(&tasks)?;
            let report = experiment::cmd_table(&ResultsStore::new(results), &tasks)?;
            match format {
                Format::Text => print!("{}", report.render_text()),
                Format::Json => println!("{}", report.to_json()),
            }
        }
        Command::Trace {
            checkpoint,
            data_dir,
            split,
            index,
            task,
            out,
            dot,
            top_k,
        } => {
            let trace = experiment::cmd_trace(
                &checkpoint,
                &data_dir,
                &split,
                index,
                task,
                &out,
                dot.as_deref(),
                top_k,
                &defaults,
            )?;
            println!("{} steps -> {}", trace.steps.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
