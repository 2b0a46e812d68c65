//! `minds`: simulate, fit, predict, select k, score and benchmark from the command line.
//!
//! Every flag can also be set through a `MINDS_`-prefixed environment variable
//! (`--burn-in` is `MINDS_BURN_IN`). Each command writes `manifest.json` beside
//! its outputs; on failure it writes `error.json` there instead and exits with
//! status 1.

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use minds_core::sim::Method;
use minds_core::{MindsError, ModelConfig};

#[derive(Debug, Parser)]
#[command(name = "minds", version, about = "Mixed binary and continuous data subtyping")]
pub struct Cli {
    /// Master seed (overrides the config or design file).
    #[arg(long, global = true, env = "MINDS_SEED")]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "MINDS_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// Chain overrides applied on top of a config file.
#[derive(Debug, Args, Default)]
pub struct ChainFlags {
    /// Number of clusters.
    #[arg(long, env = "MINDS_K")]
    k: Option<usize>,
    #[arg(long, env = "MINDS_ITERATIONS")]
    iterations: Option<usize>,
    #[arg(long, env = "MINDS_BURN_IN")]
    burn_in: Option<usize>,
    #[arg(long, env = "MINDS_THIN")]
    thin: Option<usize>,
}

impl ChainFlags {
    pub fn apply(&self, config: &mut ModelConfig) {
        if let Some(k) = self.k {
            config.n_clusters = k;
        }
        if let Some(n) = self.iterations {
            config.n_iterations = n;
        }
        if let Some(b) = self.burn_in {
            config.burn_in = b;
        }
        if let Some(t) = self.thin {
            config.thin = t;
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a ground truth and datasets from a simulation design.
    Simulate {
        /// Simulation design (JSON).
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Training subjects (default: first entry of `training_sizes`).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Run the Gibbs sampler on a dataset.
    Fit {
        /// Data CSV with a header row.
        #[arg(long)]
        data: PathBuf,
        /// Column declaration (default: the data path with a `.json` extension).
        #[arg(long)]
        sidecar: Option<PathBuf>,
        /// Model configuration (JSON); defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        chain: ChainFlags,
        /// Also write every retained draw to `draws.json`.
        #[arg(long)]
        save_draws: bool,
    },
    /// Posterior cluster memberships for new subjects under a fitted model.
    Predict {
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        sidecar: Option<PathBuf>,
        /// Output directory of `fit`.
        #[arg(long = "fit")]
        fit_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "MINDS_ITERATIONS")]
        iterations: Option<usize>,
        #[arg(long, env = "MINDS_BURN_IN")]
        burn_in: Option<usize>,
    },
    /// Fit each cluster count in a range and tabulate the information criterion.
    SelectK {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        sidecar: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Candidate counts: `3..6` (inclusive) or `3,4,5,6`.
        #[arg(long, env = "MINDS_K_RANGE", default_value = "2..6")]
        k_range: String,
        #[command(flatten)]
        chain: ChainFlags,
    },
    /// Score predicted labels against true labels.
    Metrics {
        /// `subject,label` CSV with 1-based labels.
        #[arg(long)]
        truth: PathBuf,
        /// `subject,label[,p1..pK]` CSV from `fit` or `predict`.
        #[arg(long)]
        prediction: PathBuf,
        /// Dataset for the Calinski-Harabasz index (optional).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replicate experiment comparing methods on simulated data.
    Benchmark {
        /// Experiment configuration (JSON with `design`, `model`, ...).
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Methods to run (`minds`, `kmeans`, `gower_hclust`); repeat or comma-separate.
        #[arg(long, env = "MINDS_METHOD", value_delimiter = ',')]
        method: Vec<Method>,
        #[arg(long, env = "MINDS_REPLICATES")]
        replicates: Option<usize>,
        #[command(flatten)]
        chain: ChainFlags,
        /// Skip the test-set stage.
        #[arg(long)]
        training_only: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Fit { .. } => "fit",
            Command::Predict { .. } => "predict",
            Command::SelectK { .. } => "select-k",
            Command::Metrics { .. } => "metrics",
            Command::Benchmark { .. } => "benchmark",
        }
    }

    fn out_dir(&self) -> &Path {
        match self {
            Command::Simulate { out, .. }
            | Command::Fit { out, .. }
            | Command::Predict { out, .. }
            | Command::SelectK { out, .. }
            | Command::Metrics { out, .. }
            | Command::Benchmark { out, .. } => out,
        }
    }
}

#[derive(Debug, Serialize)]
struct ErrorRecord<'a> {
    status: &'static str,
    command: &'a str,
    kind: &'static str,
    message: String,
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    e.chain()
        .find_map(|c| c.downcast_ref::<MindsError>().map(MindsError::kind))
        .unwrap_or_else(|| if e.is::<std::io::Error>() { "io" } else { "other" })
}

fn report_error(cli: &Cli, e: &anyhow::Error) {
    let record = ErrorRecord {
        status: "error",
        command: cli.command.name(),
        kind: error_kind(e),
        message: format!("{e:#}"),
    };
    let json = serde_json::to_string_pretty(&record).expect("error record serializes");
    eprintln!("{json}");
    let dir = cli.command.out_dir();
    if std::fs::create_dir_all(dir).is_ok() {
        let _ = std::fs::write(dir.join(manifest::ERROR_FILE), json + "\n");
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match commands::run(&cli.command, cli.seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(&cli, &e);
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config() {
        let cli = Cli::parse_from([
            "minds",
            "fit",
            "--data",
            "d.csv",
            "--out",
            "o",
            "--k",
            "4",
            "--iterations",
            "50",
            "--burn-in",
            "10",
            "--thin",
            "2",
        ]);
        let Command::Fit { chain, .. } = cli.command else {
            panic!("fit expected")
        };
        let mut c = ModelConfig::default();
        chain.apply(&mut c);
        assert_eq!((c.n_clusters, c.n_iterations, c.burn_in, c.thin), (4, 50, 10, 2));
    }

    #[test]
    fn methods_split_on_commas() {
        let cli = Cli::parse_from([
            "minds",
            "benchmark",
            "--design",
            "d.json",
            "--out",
            "o",
            "--method",
            "minds,kmeans",
        ]);
        let Command::Benchmark { method, .. } = cli.command else {
            panic!("benchmark expected")
        };
        assert_eq!(method, vec![Method::Minds, Method::Kmeans]);
    }

    #[test]
    fn error_kind_comes_from_the_core_error() {
        let e = anyhow::Error::new(MindsError::Config("bad".into())).context("while fitting");
        assert_eq!(error_kind(&e), "config");
        assert_eq!(error_kind(&anyhow::anyhow!("plain")), "other");
    }
}
