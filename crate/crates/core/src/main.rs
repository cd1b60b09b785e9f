//! Command-line front end for the cartridge-case comparison pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cartridge_match::error::Error;
use cartridge_match::linkage::Linkage;
use cartridge_match::pipeline::{
    cmd_cluster, cmd_compare, cmd_evaluate, cmd_preprocess, cmd_run, parse_params_file, RunConfig, RunReport,
};

#[derive(Parser)]
#[command(name = "cartridge-match", version, about = "Automatic cartridge-case comparison from 3D surface maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Manifest CSV (id,path,study,firearm,slide,ammunition).
    #[arg(long)]
    manifest: PathBuf,

    /// Directory holding preprocessed surfaces.
    #[arg(long)]
    cache_dir: PathBuf,

    /// Directory receiving result artifacts.
    #[arg(long)]
    out: PathBuf,

    /// Optional key=value parameter file.
    #[arg(long)]
    params: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,

    /// Base seed for the per-image RANSAC draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CompareArgs {
    /// Lag search bound as a fraction of each grid dimension.
    #[arg(long, default_value_t = 0.2)]
    lag_frac: f64,

    /// Resolution surfaces are brought to before comparison.
    #[arg(long = "compare-resolution-um", default_value_t = 25.0)]
    compare_resolution_um: f64,
}

#[derive(Args)]
struct ClusterArgs {
    /// Linkage rule: single, complete, average, minimax, or all.
    #[arg(long, default_value = "minimax")]
    linkage: String,

    /// Similarity cutoff for flat clusters.
    #[arg(long, default_value_t = 0.4, allow_hyphen_values = true)]
    cutoff: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Preprocess every manifest image into the cache.
    Preprocess {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Score all image pairs from cached surfaces.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        compare: CompareArgs,
    },
    /// Cluster an existing scores table.
    Cluster {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        cluster: ClusterArgs,
    },
    /// Evaluate an existing scores table against manifest ground truth.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        cluster: ClusterArgs,
    },
    /// All stages: preprocess, compare, cluster, evaluate.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        compare: CompareArgs,
        #[command(flatten)]
        cluster: ClusterArgs,
    },
}

fn parse_linkages(raw: &str) -> Result<Vec<Linkage>, Error> {
    if raw == "all" {
        Ok(Linkage::ALL.to_vec())
    } else {
        Ok(vec![raw.parse()?])
    }
}

fn build_config(common: CommonArgs, compare: Option<CompareArgs>, cluster: Option<ClusterArgs>) -> Result<RunConfig, Error> {
    let mut config = RunConfig::new(common.manifest, common.cache_dir, common.out);
    if let Some(path) = common.params {
        config.params = parse_params_file(&path)?;
    }
    config.jobs = common.jobs;
    config.seed = common.seed;
    if let Some(compare) = compare {
        config.lag_frac = compare.lag_frac;
        config.compare_resolution_um = compare.compare_resolution_um;
    }
    if let Some(cluster) = cluster {
        config.linkages = parse_linkages(&cluster.linkage)?;
        config.cutoff = cluster.cutoff;
    }
    config.validate()?;
    Ok(config)
}

fn execute(command: Command) -> Result<RunReport, Error> {
    match command {
        Command::Preprocess { common } => cmd_preprocess(&build_config(common, None, None)?),
        Command::Compare { common, compare } => cmd_compare(&build_config(common, Some(compare), None)?),
        Command::Cluster { common, cluster } => cmd_cluster(&build_config(common, None, Some(cluster))?),
        Command::Evaluate { common, cluster } => cmd_evaluate(&build_config(common, None, Some(cluster))?),
        Command::Run { common, compare, cluster } => cmd_run(&build_config(common, Some(compare), Some(cluster))?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version surface as parse "errors" but exit clean.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(report) => {
            if report.processed + report.cache_hits > 0 {
                eprintln!("preprocessed {} image(s), {} cache hit(s)", report.processed, report.cache_hits);
            }
            if report.pairs_scored > 0 {
                eprintln!("scored {} pair(s)", report.pairs_scored);
            }
            for notice in &report.notices {
                eprintln!("notice: {notice}");
            }
            if report.has_failures() {
                eprintln!("{} item(s) failed; see failures.csv", report.failures.len());
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(Error::Param(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
