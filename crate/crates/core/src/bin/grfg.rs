use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, Parser, Subcommand};

use grfg::pipeline::{run, write_outputs, Mode, RunConfig, RunReport};
use grfg::{load_csv, Error, Expr};

/// Reinforcement-learned descriptor generation for tabular regression.
#[derive(Parser)]
#[command(name = "grfg", version)]
struct Cli {
    /// Increase log verbosity (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate descriptors for a CSV dataset.
    Run {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: String,
        /// grfg, rdg, erg or org.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iters: Option<usize>,
        /// Maximum descriptor count as a multiple of the original count.
        #[arg(long)]
        tolerance: Option<f64>,
        /// Flat `key = value` configuration file; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also report K-fold cross-validated scores.
        #[arg(long)]
        cv: Option<usize>,
        /// Keep a holdout split out of model selection.
        #[arg(long)]
        holdout: bool,
        /// Save the trained agent networks.
        #[arg(long)]
        save_checkpoint: Option<PathBuf>,
    },
    /// Print the lineage of a descriptor.
    Trace {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        feature: String,
    },
    /// Render the metric table of a report.
    Report {
        #[arg(long)]
        report: PathBuf,
    },
}

fn read_report(path: &PathBuf) -> Result<RunReport, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    RunReport::from_json(&text)
}

fn execute(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Run {
            data,
            target,
            mode,
            seed,
            iters,
            tolerance,
            config,
            out,
            cv,
            holdout,
            save_checkpoint,
        } => {
            let mut cfg = match config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            if let Some(m) = mode {
                cfg.mode = m.parse::<Mode>()?;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(i) = iters {
                cfg.max_iterations = i;
            }
            if let Some(t) = tolerance {
                cfg.generation.size_tolerance = t;
            }
            if cv.is_some() {
                cfg.cv_folds = cv;
            }
            cfg.holdout |= holdout;
            let dataset = load_csv(&data, &target)?;
            let output = run(&dataset, &cfg)?;
            write_outputs(&output, &out)?;
            if let Some(path) = save_checkpoint {
                match &output.agents {
                    Some(agents) => agents.save_checkpoint(&path, &cfg.hash())?,
                    None => log::warn!("mode {} trains no agents; no checkpoint written", cfg.mode.name()),
                }
            }
            print!("{}", output.report.render());
            Ok(())
        }
        Command::Trace { report, feature } => {
            let r = read_report(&report)?;
            let expr: Expr = feature.parse()?;
            let name = expr.to_string();
            let known = r.best.descriptors.iter().any(|d| d.name == name)
                || r.iterations.iter().any(|i| i.generated.contains(&name))
                || r.dataset.descriptors.contains(&name);
            if !known {
                eprintln!("note: {name} does not appear in this report");
            }
            print!("{}", expr.lineage_tree());
            Ok(())
        }
        Command::Report { report } => {
            print!("{}", read_report(&report)?.render());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Aborted(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
