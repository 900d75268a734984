//! `truckvol`: clean road links, tune and train the truck-volume forests,
//! impute missing class volumes, compute block traffic density and
//! evaluate the models.
//!
//! Exit codes: 0 success, 2 usage or schema error, 3 data error,
//! 4 internal invariant violation.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Ctx, Inputs};
use config::{parse_levels, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] truckvol_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Data(_) => 3,
            CliError::Core(truckvol_core::Error::Invariant(_)) => 4,
            CliError::Core(e) if e.is_data_error() => 3,
            CliError::Core(_) => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "truckvol", version, about = "Truck AADT imputation and census-block traffic density")]
struct Cli {
    /// INI-style config file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for all outputs and default location of intermediate inputs.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct LinkArg {
    /// Links CSV (defaults to the previous step's output in --out-dir).
    #[arg(long)]
    links: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct ParamsArg {
    /// JSON file with `mdv` and `hdv` hyperparameters, as written by `tune`.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded synthetic corpus with known class shares.
    Synth {
        #[arg(long)]
        n_links: Option<usize>,
        #[arg(long)]
        n_blocks: Option<usize>,
        #[arg(long)]
        missing_frac: Option<f64>,
        #[arg(long)]
        dirty_frac: Option<f64>,
    },
    /// Apply the exclusion rules, county attribution and urban recoding.
    Clean {
        #[command(flatten)]
        links: LinkArg,
        #[arg(long)]
        counties: Option<PathBuf>,
        #[arg(long)]
        urban_areas: Option<PathBuf>,
    },
    /// Bayesian hyperparameter search for both truck models.
    Tune {
        #[command(flatten)]
        links: LinkArg,
        /// Fraction of links (stratified by functional class) used for tuning.
        #[arg(long)]
        tune_sample: Option<f64>,
        #[arg(long)]
        n_iter: Option<usize>,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Fit the medium- and heavy-duty forests.
    Train {
        #[command(flatten)]
        links: LinkArg,
        #[command(flatten)]
        params: ParamsArg,
    },
    /// Fill missing truck volumes and derive light-duty volumes.
    Impute {
        #[command(flatten)]
        links: LinkArg,
    },
    /// Buffered-block VKT density by vehicle class.
    Density {
        #[command(flatten)]
        links: LinkArg,
        #[arg(long)]
        blocks: Option<PathBuf>,
        #[arg(long)]
        buffer_m: Option<f64>,
        #[arg(long)]
        arc_segments: Option<usize>,
    },
    /// Hold-out metrics, county MAPE, residuals, predictor summaries and k-fold CV.
    Validate {
        #[command(flatten)]
        links: LinkArg,
        #[command(flatten)]
        params: ParamsArg,
        #[arg(long)]
        test_frac: Option<f64>,
        #[arg(long)]
        cv_folds: Option<usize>,
    },
    /// Test R² under increasing noise on the predictor or the response.
    Sensitivity {
        #[command(flatten)]
        links: LinkArg,
        #[command(flatten)]
        params: ParamsArg,
        /// Comma-separated noise levels in percent.
        #[arg(long)]
        levels: Option<String>,
    },
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    let mut inputs = Inputs {
        links: cfg.paths.links.clone(),
        blocks: cfg.paths.blocks.clone(),
        counties: cfg.paths.counties.clone(),
        urban_areas: cfg.paths.urban_areas.clone(),
        params: None,
    };
    let mut levels = cfg.validation.noise_levels.clone();

    match &cli.command {
        Command::Synth { n_links, n_blocks, missing_frac, dirty_frac } => {
            set(&mut cfg.synth.n_links, *n_links);
            set(&mut cfg.synth.n_blocks, *n_blocks);
            set(&mut cfg.synth.missing_frac, *missing_frac);
            set(&mut cfg.synth.dirty_frac, *dirty_frac);
        }
        Command::Clean { links, counties, urban_areas } => {
            set(&mut inputs.links, links.links.clone().map(Some));
            set(&mut inputs.counties, counties.clone().map(Some));
            set(&mut inputs.urban_areas, urban_areas.clone().map(Some));
        }
        Command::Tune { links, tune_sample, n_iter, folds } => {
            set(&mut inputs.links, links.links.clone().map(Some));
            set(&mut cfg.tuning.sample_frac, *tune_sample);
            set(&mut cfg.tuning.n_iter, *n_iter);
            set(&mut cfg.tuning.folds, *folds);
        }
        Command::Train { links, params } | Command::Sensitivity { links, params, .. } => {
            set(&mut inputs.links, links.links.clone().map(Some));
            inputs.params = params.params.clone();
        }
        Command::Impute { links } => set(&mut inputs.links, links.links.clone().map(Some)),
        Command::Density { links, blocks, buffer_m, arc_segments } => {
            set(&mut inputs.links, links.links.clone().map(Some));
            set(&mut inputs.blocks, blocks.clone().map(Some));
            set(&mut cfg.buffer_m, *buffer_m);
            set(&mut cfg.arc_segments, *arc_segments);
        }
        Command::Validate { links, params, test_frac, cv_folds } => {
            set(&mut inputs.links, links.links.clone().map(Some));
            inputs.params = params.params.clone();
            set(&mut cfg.validation.test_frac, *test_frac);
            set(&mut cfg.validation.cv_folds, *cv_folds);
        }
    }
    if let Command::Sensitivity { levels: Some(l), .. } = &cli.command {
        levels = parse_levels(l)?;
    }
    cfg.validate()?;

    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let out = cli.out_dir.clone().or_else(|| cfg.paths.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)?;
    let ctx = Ctx { cfg, out, inputs };

    match cli.command {
        Command::Synth { .. } => commands::synth(&ctx),
        Command::Clean { .. } => commands::clean(&ctx),
        Command::Tune { .. } => commands::tune(&ctx),
        Command::Train { .. } => commands::train(&ctx),
        Command::Impute { .. } => commands::impute(&ctx),
        Command::Density { .. } => commands::density(&ctx),
        Command::Validate { .. } => commands::validate(&ctx),
        Command::Sensitivity { .. } => commands::sensitivity_cmd(&ctx, &levels),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use truckvol_core::Error;

    #[test]
    fn exit_code_mapping() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        assert_eq!(CliError::Data("x".into()).exit_code(), 3);
        assert_eq!(CliError::Core(Error::Invariant("x".into())).exit_code(), 4);
        assert_eq!(CliError::Core(Error::EmptyTrainingSet("mdv".into())).exit_code(), 3);
        assert_eq!(CliError::Core(Error::InvalidArgument("x".into())).exit_code(), 2);
        let schema = Error::MissingColumn { path: "a.csv".into(), column: "link_id".into() };
        assert_eq!(CliError::Core(schema).exit_code(), 2);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
