use std::path::PathBuf;

use clap::{Parser, Subcommand};
use dmkrr_cli::{config::ExperimentConfig, report, run, CliError};

#[derive(Parser)]
#[command(
    name = "dmkrr",
    version,
    about = "Kernel ridge regression surrogates for dynamical systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the datasets of a config and write them with a manifest.
    Generate {
        config: PathBuf,
        /// Override a config field, e.g. `--set protocol.n_train=1024`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Target directory (default: `<output dir>/data`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tune, fit and test a model; writes a results bundle.
    Run {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Worker threads (default: all cores).
        #[arg(long, env = "DMKRR_THREADS")]
        threads: Option<usize>,
    },
    /// Merge result bundles into a comparison table.
    Report {
        #[arg(required = true)]
        bundles: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also write a gnuplot script.
        #[arg(long)]
        plot: bool,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = real_main(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn real_main(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { config, set, out } => {
            let cfg = ExperimentConfig::load(&config, &set)?;
            let dir = out.unwrap_or_else(|| dmkrr_cli::data_dir(&cfg));
            let m = dmkrr_cli::generate(&cfg, &dir)?;
            for f in &m.files {
                println!(
                    "{}: {} trajectories, {} states of dimension {}",
                    dir.join(&f.name).display(),
                    f.trajectories,
                    f.states,
                    f.dim
                );
            }
        }
        Command::Run {
            config,
            set,
            threads,
        } => {
            let cfg = ExperimentConfig::load(&config, &set)?;
            let go = || run::run(&cfg);
            let out = match threads {
                Some(t) => rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build()
                    .map_err(|e| CliError::Config(format!("thread pool: {e}")))?
                    .install(go)?,
                None => go()?,
            };
            println!(
                "{} {} {}: {}  ({})",
                out.summary.name,
                out.summary.kernel,
                out.summary.test_metric.name(),
                out.summary.table,
                out.dir.display()
            );
        }
        Command::Report { bundles, out, plot } => {
            let summaries = bundles
                .iter()
                .map(|b| report::load_summary(b))
                .collect::<Result<Vec<_>, _>>()?;
            let r = report::build(&summaries)?;
            report::write(&r, &out, plot)?;
            print!("{}", r.to_text());
        }
    }
    Ok(())
}
